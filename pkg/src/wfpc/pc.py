"""Principal-component estimation of factors and loadings.

``pc_fit`` solves ``min ||X - F B'||_F^2`` subject to ``F'F/T = I`` and
``B'B`` diagonal with non-increasing positive entries, via the top-r
eigendecomposition of the Gram matrix ``X X'/T``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DesignError, DimensionError, RankDeficientSignalError

SIGN_CONVENTION_VERSION = 1  # flip so each factor column's largest-|entry| is positive


@dataclass(frozen=True)
class PcFit:
    """Estimated factors, loadings, eigenvalues, residuals, common part.

    ``F_hat`` is sqrt(T) times the leading eigenvectors of ``X X'/T``,
    ``B_hat = X' F_hat / T``, ``lambda_hat`` the corresponding eigenvalues
    in descending order, ``E_hat = X - C_hat`` and ``C_hat = F_hat B_hat'``.
    """

    F_hat: np.ndarray
    B_hat: np.ndarray
    lambda_hat: np.ndarray
    E_hat: np.ndarray
    C_hat: np.ndarray
    r: int

    @property
    def T(self) -> int:
        return self.F_hat.shape[0]

    @property
    def N(self) -> int:
        return self.B_hat.shape[0]


def fix_column_signs(M: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude is positive.

    Ties in magnitude resolve to the lowest row index. Returns the
    +-1 flips applied, one per column.
    """
    idx = np.argmax(np.abs(M), axis=0)
    signs = np.ones(M.shape[1])
    for k, i in enumerate(idx):
        if M[i, k] < 0:
            signs[k] = -1.0
            M[:, k] = -M[:, k]
    return signs


def pc_fit(X: np.ndarray, r: int, gram_side: str = "auto") -> PcFit:
    """Fit the r-factor principal-component estimator.

    Parameters
    ----------
    X : ndarray, shape (T, N)
        Data panel, rows are time points.
    r : int
        Number of components, ``1 <= r <= min(T, N)``.
    gram_side : {"auto", "time", "cross"}
        Which Gram matrix to eigendecompose. "time" uses the T x T matrix
        ``X X'/T``, "cross" the N x N matrix ``X' X/T`` with eigenvectors
        mapped back through X; "auto" picks the smaller side. All routes
        agree up to floating-point error.

    Raises
    ------
    DesignError
        Non-finite input or r out of range.
    RankDeficientSignalError
        Fewer than r numerically positive eigenvalues.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("X must be a 2-d array")
    T, N = X.shape
    if not (1 <= r <= min(T, N)):
        raise DesignError(f"r must satisfy 1 <= r <= min(T, N) = {min(T, N)}, got {r}")
    if not np.all(np.isfinite(X)):
        raise DesignError("X contains non-finite entries")
    if gram_side not in ("auto", "time", "cross"):
        raise DesignError(f"unknown gram_side {gram_side!r}")
    if gram_side == "auto":
        gram_side = "time" if T <= N else "cross"

    if gram_side == "time":
        lam, U = _top_eigh(X @ X.T / T, r)
        _require_signal_rank(lam, r)
        F_hat = np.sqrt(T) * U
    else:
        lam, V = _top_eigh(X.T @ X / T, r)
        _require_signal_rank(lam, r)
        F_hat = (X @ V) / np.sqrt(lam)[None, :]  # = sqrt(T) * unit left vectors

    fix_column_signs(F_hat)
    if r > 1:
        gaps = lam[:-1] - lam[1:]
        if np.any(gaps <= 1e-12 * lam[0]):
            warnings.warn("tied leading eigenvalues: component order is arbitrary", stacklevel=2)
    B_hat = X.T @ F_hat / T
    C_hat = F_hat @ B_hat.T
    E_hat = X - C_hat
    return PcFit(F_hat=F_hat, B_hat=B_hat, lambda_hat=lam.copy(), E_hat=E_hat, C_hat=C_hat, r=r)


def _top_eigh(G: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading r eigenpairs of a symmetric matrix, descending.

    Direct dense LAPACK solve restricted to the wanted eigenpairs; same
    results as a full decomposition, deterministic for a given input.
    """
    n = G.shape[0]
    evals, evecs = sla.eigh(G, subset_by_index=[n - r, n - 1])
    return evals[::-1], evecs[:, ::-1]


def _require_signal_rank(lam: np.ndarray, r: int) -> None:
    if lam[-1] <= 0 or lam[-1] <= np.finfo(float).eps * lam[0]:
        raise RankDeficientSignalError(
            f"eigenvalue {r} of the Gram matrix is numerically zero ({lam[-1]:.3e})"
        )


def objective_value(X: np.ndarray, F: np.ndarray, B: np.ndarray) -> float:
    """Squared Frobenius reconstruction error ``||X - F B'||_F**2``."""
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    if X.ndim != 2 or F.ndim != 2 or B.ndim != 2:
        raise DimensionError("X, F, B must be 2-d arrays")
    if F.shape[0] != X.shape[0] or B.shape[0] != X.shape[1] or F.shape[1] != B.shape[1]:
        raise DimensionError(
            f"shapes do not conform: X {X.shape}, F {F.shape}, B {B.shape}"
        )
    return float(np.linalg.norm(X - F @ B.T, "fro") ** 2)
