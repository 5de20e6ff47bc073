import json

import numpy as np
import pytest

from wfpc import matio
from wfpc.errors import DesignError
from wfpc.rotation import pseudo_true_rotation


class TestMatrixRoundTrip:
    def test_full_precision_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((17, 5)) * np.logspace(-12, 12, 5)[None, :]
        path = tmp_path / "m.csv"
        matio.save_matrix(M, path)
        back = matio.load_matrix(path)
        assert back.shape == M.shape
        assert np.array_equal(back, M)  # 17 significant digits round-trip doubles

    def test_vector_written_as_column(self, tmp_path):
        v = np.array([1.5, -2.25, 3.0])
        matio.save_matrix(v, tmp_path / "v.csv")
        back = matio.load_matrix(tmp_path / "v.csv")
        assert back.shape == (3, 1) and np.array_equal(back.ravel(), v)

    def test_non_finite_rejected_on_write(self, tmp_path):
        with pytest.raises(DesignError):
            matio.save_matrix(np.array([[np.inf]]), tmp_path / "bad.csv")

    def test_non_rectangular_rejected_on_read(self, tmp_path):
        p = tmp_path / "ragged.csv"
        p.write_text("1,2,3\n4,5\n")
        with pytest.raises(DesignError):
            matio.load_matrix(p)

    def test_matrix_file_wrapper(self, tmp_path):
        M = np.arange(6, dtype=float).reshape(2, 3)
        mf = matio.MatrixFile(path=tmp_path / "w.csv", values=M)
        mf.save()
        again = matio.MatrixFile.load(tmp_path / "w.csv")
        assert again.shape == (2, 3)
        assert np.array_equal(again.values, M)


class TestRotationSerialization:
    def test_pseudo_true_rotation_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        F = rng.standard_normal((30, 2)) + 1.0
        B = rng.standard_normal((20, 2)) * np.array([3.0, 1.0])
        rot = pseudo_true_rotation(F, B)
        payload = rot.to_dict()
        text = json.dumps(payload)
        back = json.loads(text)
        assert np.array_equal(np.array(back["H"]), rot.H)
        assert np.array_equal(np.array(back["Lambda"]), rot.Lambda)
