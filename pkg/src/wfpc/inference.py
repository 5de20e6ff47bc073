"""Plug-in asymptotic covariances and test statistics for PC estimates.

Every statistic takes covariance objects built either from plug-in
estimates (``gamma_hat``, ``phi_hat``) or from truth-derived quantities
supplied by the caller (``FactorCov``/``LoadingCov`` constructed
directly); which mode is in play is decided by how the inputs were
built, never inferred from data.

Time and unit indices follow the estimation convention: ``t`` runs over
1..T and ``i`` over 1..N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DesignError, DimensionError, NumericalDegeneracyError
from .pc import PcFit

PSD_TOL = 1e-10  # eigenvalues above -PSD_TOL * trace count as nonnegative


@dataclass(frozen=True)
class FactorCov:
    """Covariance of a scaled factor estimate at one time point.

    ``Gamma`` is the r x r covariance of the scaled deviation and
    ``scale`` the r x r scaling matrix (the plug-in uses the symmetric
    square root of ``B_hat'B_hat``; truth-derived versions use the square
    root of ``B0'B0``).
    """

    Gamma: np.ndarray
    scale: np.ndarray
    t: int

    def __post_init__(self):
        G = np.asarray(self.Gamma, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionError("Gamma must be square")
        if np.abs(G - G.T).max() > 1e-12 * max(np.abs(G).max(), 1.0):
            raise NumericalDegeneracyError("Gamma is not symmetric")
        _require_psd(G, "Gamma")
        object.__setattr__(self, "Gamma", (G + G.T) / 2.0)
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))


@dataclass(frozen=True)
class LoadingCov:
    """Long-run covariance of a loading estimate for one unit.

    ``Phi`` is the r x r HAC covariance, ``bandwidth`` the number of
    autocovariance lags entering the Bartlett sum.
    """

    Phi: np.ndarray
    bandwidth: int
    i: int

    def __post_init__(self):
        P = np.asarray(self.Phi, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionError("Phi must be square")
        _require_psd(P, "Phi")
        object.__setattr__(self, "Phi", (P + P.T) / 2.0)


def _require_psd(M: np.ndarray, name: str) -> None:
    w = np.linalg.eigvalsh((M + M.T) / 2.0)
    tr = max(np.trace(M), np.finfo(float).tiny)
    if w[0] < -PSD_TOL * tr:
        raise NumericalDegeneracyError(f"{name} has negative eigenvalue {w[0]:.3e}")


def _sqrt_diagonal_like(M: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; entrywise on the diagonal, eigen otherwise."""
    off = M - np.diag(np.diag(M))
    if np.abs(off).max() <= 1e-12 * max(np.abs(np.diag(M)).max(), 1.0):
        return np.diag(np.sqrt(np.clip(np.diag(M), 0.0, None)))
    w, V = np.linalg.eigh((M + M.T) / 2.0)
    tr = max(np.trace(M), np.finfo(float).tiny)
    if w[0] < -PSD_TOL * tr:
        raise NumericalDegeneracyError("matrix square root of an indefinite matrix")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def gamma_hat(pc: PcFit, t: int) -> FactorCov:
    """Plug-in covariance of the scaled factor deviation at time t.

    Builds ``Omega_t = sum_i b_hat_i e_hat[t,i]**2 b_hat_i'`` and
    sandwiches it with the inverse square root of ``B_hat'B_hat``.
    Allows cross-sectional heteroskedasticity; assumes cross-sectional
    independence of the idiosyncratic errors.
    """
    if not (1 <= t <= pc.T):
        raise DesignError(f"t must be in 1..{pc.T}, got {t}")
    e_t = pc.E_hat[t - 1, :]
    Omega = (pc.B_hat * (e_t**2)[:, None]).T @ pc.B_hat
    inv_root = 1.0 / np.sqrt(pc.lambda_hat)
    Gamma = inv_root[:, None] * Omega * inv_root[None, :]
    return FactorCov(Gamma=Gamma, scale=np.diag(np.sqrt(pc.lambda_hat)), t=t)


def phi_hat(pc: PcFit, i: int, bandwidth: int | None = None) -> LoadingCov:
    """Bartlett-kernel HAC covariance of the loading estimate for unit i.

    ``V_l = T**-1 sum_{t=l+1}^T f_hat_t e[t,i] e[t-l,i] f_hat_{t-l}'`` and
    ``Phi = V_0 + sum_{l=1}^L (1 - l/(L+1)) (V_l + V_l')``. The default
    bandwidth is ``floor(4 (T/100)**(2/9))``.
    """
    if not (1 <= i <= pc.N):
        raise DesignError(f"i must be in 1..{pc.N}, got {i}")
    T = pc.T
    if bandwidth is None:
        bandwidth = int(np.floor(4.0 * (T / 100.0) ** (2.0 / 9.0)))
    if not (0 <= bandwidth < T):
        raise DesignError(f"bandwidth must satisfy 0 <= L < T = {T}, got {bandwidth}")
    fe = pc.F_hat * pc.E_hat[:, i - 1][:, None]  # rows f_hat_t * e[t, i]
    Phi = fe.T @ fe / T
    for lag in range(1, bandwidth + 1):
        V = fe[lag:].T @ fe[:-lag] / T
        Phi = Phi + (1.0 - lag / (bandwidth + 1.0)) * (V + V.T)
    return LoadingCov(Phi=Phi, bandwidth=bandwidth, i=i)


def z_factor(pc: PcFit, t: int, k: int, f_ref_tk: float, cov: FactorCov) -> float:
    """Standardized deviation of the k-th factor estimate at time t.

    Returns ``scale[k,k] * (f_hat[t,k] - f_ref) * sqrt((Gamma^-1)[k,k])``,
    asymptotically standard normal when ``f_ref`` is the identified
    factor value and ``cov`` is consistent.
    """
    if not (1 <= t <= pc.T):
        raise DesignError(f"t must be in 1..{pc.T}, got {t}")
    if not (1 <= k <= pc.r):
        raise DesignError(f"k must be in 1..{pc.r}, got {k}")
    Ginv = _inverse(cov.Gamma, "Gamma")
    delta = pc.F_hat[t - 1, k - 1] - f_ref_tk
    return float(cov.scale[k - 1, k - 1] * delta * np.sqrt(Ginv[k - 1, k - 1]))


def z_loading(pc: PcFit, i: int, k: int, b_ref_ik: float, cov: LoadingCov) -> float:
    """Standardized deviation of the k-th loading estimate for unit i,
    ``sqrt(T * (Phi^-1)[k,k]) * (b_hat[i,k] - b_ref)``."""
    if not (1 <= i <= pc.N):
        raise DesignError(f"i must be in 1..{pc.N}, got {i}")
    if not (1 <= k <= pc.r):
        raise DesignError(f"k must be in 1..{pc.r}, got {k}")
    Pinv = _inverse(cov.Phi, "Phi")
    delta = pc.B_hat[i - 1, k - 1] - b_ref_ik
    return float(np.sqrt(pc.T * Pinv[k - 1, k - 1]) * delta)


def z_common(
    pc: PcFit,
    t: int,
    i: int,
    c_ref: float,
    gcov: FactorCov,
    lcov: LoadingCov,
    b_i: np.ndarray | None = None,
    f_t: np.ndarray | None = None,
) -> float:
    """Standardized deviation of the common-component estimate at (t, i).

    The variance is ``V + U`` with ``V = b' S^-1 Gamma S^-1 b`` (S the
    scale in ``gcov``) and ``U = T**-1 f' Phi f``. By default ``b`` and
    ``f`` are the estimated vectors; truth-derived vectors can be passed
    to evaluate the oracle variance instead.
    """
    if not (1 <= t <= pc.T) or not (1 <= i <= pc.N):
        raise DesignError(f"(t, i) must be in 1..{pc.T} x 1..{pc.N}, got ({t}, {i})")
    b = pc.B_hat[i - 1] if b_i is None else np.asarray(b_i, dtype=float)
    f = pc.F_hat[t - 1] if f_t is None else np.asarray(f_t, dtype=float)
    try:
        Sinv_b = np.linalg.solve(gcov.scale, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("factor scale matrix is singular") from exc
    V = float(Sinv_b @ gcov.Gamma @ Sinv_b)
    U = float(f @ lcov.Phi @ f) / pc.T
    if V + U <= 0:
        raise NumericalDegeneracyError(f"nonpositive variance V + U = {V + U:.3e}")
    return float((pc.C_hat[t - 1, i - 1] - c_ref) / np.sqrt(V + U))


def q2_joint(
    delta: np.ndarray,
    weight: np.ndarray,
    scale: np.ndarray | None = None,
    T: int | None = None,
) -> float:
    """Joint quadratic-form statistic against a chi-square(r) law.

    Loading form (pass ``T``): ``T * delta' weight^-1 delta``. Factor
    form (pass ``scale`` S): ``delta' S' weight^-1 S delta``. Exactly one
    of ``scale`` and ``T`` must be given.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if (scale is None) == (T is None):
        raise DesignError("pass exactly one of scale= (factor form) or T= (loading form)")
    Winv = _inverse(np.asarray(weight, dtype=float), "weight")
    if T is not None:
        return float(T * delta @ Winv @ delta)
    v = np.asarray(scale, dtype=float) @ delta
    return float(v @ Winv @ v)


def _inverse(M: np.ndarray, name: str) -> np.ndarray:
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"{name} is singular") from exc
    if not np.all(np.isfinite(Minv)):
        raise NumericalDegeneracyError(f"{name} is singular")
    return Minv


def chi2_quantile(r: int, p: float) -> float:
    """Quantile of the chi-square law with r degrees of freedom."""
    if r < 1:
        raise DesignError(f"degrees of freedom must be positive, got {r}")
    if not (0.0 < p < 1.0):
        raise DesignError(f"p must lie strictly in (0, 1), got {p}")
    return float(stats.chi2.ppf(p, df=r))


def normal_quantile(p: float) -> float:
    """Standard normal quantile."""
    if not (0.0 < p < 1.0):
        raise DesignError(f"p must lie strictly in (0, 1), got {p}")
    return float(stats.norm.ppf(p))


def batch_z_factors(pc: PcFit, F_ref: np.ndarray, bandwidth: int | None = None) -> list[dict]:
    """Plug-in z statistics for every (t, k) against a reference factor matrix.

    Returns long-format rows ``{"index": t, "statistic": "z_f_k<k>",
    "value": z, "pvalue": two-sided}`` ready for CSV emission.
    """
    F_ref = np.asarray(F_ref, dtype=float)
    if F_ref.shape != pc.F_hat.shape:
        raise DimensionError("reference factor matrix shape mismatch")
    rows = []
    for t in range(1, pc.T + 1):
        cov = gamma_hat(pc, t)
        for k in range(1, pc.r + 1):
            z = z_factor(pc, t, k, F_ref[t - 1, k - 1], cov)
            rows.append(_stat_row(t, f"z_f_k{k}", z))
    return rows


def batch_z_loadings(pc: PcFit, B_ref: np.ndarray, bandwidth: int | None = None) -> list[dict]:
    """Plug-in z statistics for every (i, k) against a reference loading matrix."""
    B_ref = np.asarray(B_ref, dtype=float)
    if B_ref.shape != pc.B_hat.shape:
        raise DimensionError("reference loading matrix shape mismatch")
    rows = []
    for i in range(1, pc.N + 1):
        cov = phi_hat(pc, i, bandwidth)
        for k in range(1, pc.r + 1):
            z = z_loading(pc, i, k, B_ref[i - 1, k - 1], cov)
            rows.append(_stat_row(i, f"z_b_k{k}", z))
    return rows


def _stat_row(index: int, statistic: str, z: float) -> dict:
    return {
        "index": index,
        "statistic": statistic,
        "value": z,
        "pvalue": float(2.0 * stats.norm.sf(abs(z))),
    }
