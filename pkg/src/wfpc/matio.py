"""Matrix, config, and result file handling.

Numeric matrices travel as headerless CSV (row = time point or unit,
comma-separated); full-precision mode serializes doubles with 17
significant digits so that parse(serialize(M)) reproduces M bitwise.
Summaries are tidy, headered CSV; manifests and fit reports are JSON.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DesignError
from .montecarlo import SUMMARY_COLUMNS, SUMMARY_SCHEMA_VERSION, McSummary
from .pc import SIGN_CONVENTION_VERSION, PcFit

FULL_PRECISION_FMT = "%.17g"


@dataclass(frozen=True)
class MatrixFile:
    """A rectangular, finite numeric matrix bound to a path."""

    path: Path
    values: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def load(cls, path) -> "MatrixFile":
        return cls(path=Path(path), values=load_matrix(path))

    def save(self) -> None:
        save_matrix(self.values, self.path)


def save_matrix(M: np.ndarray, path, full_precision: bool = True) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise DesignError("only 1-d or 2-d arrays can be written as matrix CSV")
    if not np.all(np.isfinite(M)):
        raise DesignError("matrix contains non-finite entries")
    fmt = FULL_PRECISION_FMT if full_precision else "%.9g"
    np.savetxt(path, M, fmt=fmt, delimiter=",")


def load_matrix(path) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DesignError(f"{path}: not a rectangular numeric CSV ({exc})") from exc
    if not np.all(np.isfinite(M)):
        raise DesignError(f"{path}: matrix contains non-finite entries")
    return M


def load_json(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DesignError(f"{path}: invalid JSON ({exc})") from exc


def save_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_pcfit(fit: PcFit, out_dir) -> None:
    """Write the fit bundle: factor/loading/eigenvalue/residual CSVs + manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(fit.F_hat, out / "F_hat.csv")
    save_matrix(fit.B_hat, out / "B_hat.csv")
    save_matrix(fit.lambda_hat, out / "lambda_hat.csv")
    save_matrix(fit.E_hat, out / "residuals.csv")
    save_json(
        {
            "r": fit.r,
            "T": fit.T,
            "N": fit.N,
            "sign_convention_version": SIGN_CONVENTION_VERSION,
        },
        out / "manifest.json",
    )


def save_stat_rows(rows: list[dict], path) -> None:
    """Long-format statistic table: index, statistic, value, pvalue."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("index", "statistic", "value", "pvalue"))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def save_summary(summary: McSummary, out_dir) -> None:
    """Write summary.csv (tidy long format), config.echo.json, failures.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for rec in summary.as_records():
            writer.writerow(rec)
    echo = summary.config.to_dict()
    echo["summary_schema_version"] = SUMMARY_SCHEMA_VERSION
    save_json(echo, out / "config.echo.json")
    with open(out / "failures.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=("experiment", "N", "T", "alpha1", "alpha2", "replication", "error", "message"),
        )
        writer.writeheader()
        for rec in summary.failures:
            writer.writerow(rec)
