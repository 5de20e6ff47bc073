"""Factor-augmented regression, inference on its coefficients, forecasting.

The regression sample is t = 1..T with targets dated t + h: row t of the
regressor matrix pairs with ``y[t-1]`` holding the value at time t + h.
The h-step forecast evaluates the fitted equation at the last in-sample
regressor row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollinearityError, DesignError, DimensionError, NumericalDegeneracyError
from .inference import FactorCov, normal_quantile

COV_MODES = ("heteroskedastic", "homoskedastic")


@dataclass(frozen=True)
class AugRegFit:
    """Least-squares fit of targets on estimated factors plus controls.

    ``delta_hat`` stacks the factor coefficients first, then the control
    coefficients. ``Sigma_delta_hat`` is the sandwich covariance of
    ``sqrt(T) * (delta_hat - delta0)``; ``sigma_eps_hat`` divides the
    residual sum of squares by T (no degrees-of-freedom correction).
    ``residual_times`` labels residual ``j`` with its target date.
    """

    delta_hat: np.ndarray
    Sigma_delta_hat: np.ndarray
    residuals: np.ndarray
    residual_times: np.ndarray
    sigma_eps_hat: float
    h: int
    r: int
    L: int
    ZtZ_inv: np.ndarray
    cov_mode: str

    @property
    def T(self) -> int:
        return self.residuals.shape[0]

    @property
    def gamma_hat(self) -> np.ndarray:
        return self.delta_hat[: self.r]

    @property
    def beta_hat(self) -> np.ndarray:
        return self.delta_hat[self.r :]

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.Sigma_delta_hat) / self.T)


@dataclass(frozen=True)
class Forecast:
    """Point forecast with intervals for the conditional mean and the actual value.

    ``sigma_cond`` is the standard error of the estimated conditional
    mean; ``sigma_actual`` adds the target innovation variance and is
    valid for the actual-value interval only under Gaussian innovations
    (recorded by ``actual_assumes_gaussian``).
    """

    y_hat: float
    sigma_cond: float
    sigma_actual: float
    level: float
    cond_lower: float
    cond_upper: float
    actual_lower: float
    actual_upper: float
    actual_assumes_gaussian: bool = True

    def to_dict(self) -> dict:
        return {
            "y_hat": self.y_hat,
            "sigma_cond": self.sigma_cond,
            "sigma_actual": self.sigma_actual,
            "level": self.level,
            "cond_interval": [self.cond_lower, self.cond_upper],
            "actual_interval": [self.actual_lower, self.actual_upper],
            "actual_assumes_gaussian": self.actual_assumes_gaussian,
        }


def augreg_fit(
    y: np.ndarray,
    F_hat: np.ndarray,
    W: np.ndarray | None,
    h: int,
    cov_mode: str = "heteroskedastic",
) -> AugRegFit:
    """Least-squares regression of h-step-ahead targets on factors and controls.

    Parameters
    ----------
    y : ndarray, shape (T,)
        Targets; entry t-1 is the value dated t + h.
    F_hat : ndarray, shape (T, r)
        Factor estimates (or any factor matrix: passing the identified
        factors yields the infeasible benchmark fit).
    W : ndarray, shape (T, L) or None
        Observed controls; None or an empty matrix means no controls.
    h : int
        Forecast horizon (labels the residuals; the sample is as given).
    cov_mode : {"heteroskedastic", "homoskedastic"}
        Middle matrix of the sandwich: ``T**-1 sum_t z_t e_t**2 z_t'`` or
        ``sigma_eps_hat**2 * Z'Z/T``.
    """
    y = np.asarray(y, dtype=float).ravel()
    F_hat = np.asarray(F_hat, dtype=float)
    T, r = F_hat.shape
    if W is None:
        W = np.zeros((T, 0))
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != T or y.shape[0] != T:
        raise DimensionError("y, F_hat, W must agree on the number of rows")
    if h < 1:
        raise DesignError(f"h must be a positive horizon, got {h}")
    if cov_mode not in COV_MODES:
        raise DesignError(f"cov_mode must be one of {COV_MODES}, got {cov_mode!r}")
    L = W.shape[1]
    if T - h < r + L + 1:
        raise DesignError(f"sample too short: need T - h >= r + L + 1, got T={T}, h={h}")
    Z = np.hstack([F_hat, W])
    G = Z.T @ Z / T
    svals = np.linalg.svd(G, compute_uv=False)
    if svals[-1] <= 1e-12 * svals[0]:
        raise CollinearityError("regressor matrix is numerically rank deficient")
    delta = np.linalg.solve(G, Z.T @ y / T)
    resid = y - Z @ delta
    sigma2 = float(resid @ resid) / T
    if cov_mode == "homoskedastic":
        S_mid = sigma2 * G
    else:
        S_mid = (Z * (resid**2)[:, None]).T @ Z / T
    G_inv = np.linalg.inv(G)
    Sigma = G_inv @ S_mid @ G_inv
    return AugRegFit(
        delta_hat=delta,
        Sigma_delta_hat=(Sigma + Sigma.T) / 2.0,
        residuals=resid,
        residual_times=np.arange(1 + h, T + h + 1),
        sigma_eps_hat=sigma2,
        h=h,
        r=r,
        L=L,
        ZtZ_inv=G_inv,
        cov_mode=cov_mode,
    )


def infeasible_gamma(
    y: np.ndarray, F0: np.ndarray, W: np.ndarray | None, h: int
) -> np.ndarray:
    """Benchmark factor coefficients from the identified factors.

    Projects the controls out of ``F0`` (annihilator of W) and regresses
    the targets on the projected factors; with no controls this is the
    plain regression of y on F0. Numerically identical to the factor
    block of :func:`augreg_fit` run on the same sample with ``F0`` in
    place of the factor estimates.
    """
    y = np.asarray(y, dtype=float).ravel()
    F0 = np.asarray(F0, dtype=float)
    T = F0.shape[0]
    if W is None:
        W = np.zeros((T, 0))
    W = np.asarray(W, dtype=float)
    if W.shape[0] != T or y.shape[0] != T:
        raise DimensionError("y, F0, W must agree on the number of rows")
    if h < 1:
        raise DesignError(f"h must be a positive horizon, got {h}")
    if W.shape[1] > 0:
        WtW = W.T @ W
        try:
            F_proj = F0 - W @ np.linalg.solve(WtW, W.T @ F0)
            y_proj = y - W @ np.linalg.solve(WtW, W.T @ y)
        except np.linalg.LinAlgError as exc:
            raise CollinearityError("W'W is singular") from exc
    else:
        F_proj, y_proj = F0, y
    G = F_proj.T @ F_proj
    svals = np.linalg.svd(G, compute_uv=False)
    if svals[-1] <= 1e-12 * max(svals[0], 1.0):
        raise CollinearityError("projected factor Gram matrix is singular")
    return np.linalg.solve(G, F_proj.T @ y_proj)


def forecast(
    fit: AugRegFit,
    z_T_hat: np.ndarray,
    gcov_T: FactorCov,
    gamma: np.ndarray,
    level: float = 0.95,
) -> Forecast:
    """h-step forecast with conditional-mean and actual-value intervals.

    The conditional-mean variance is
    ``z' Sigma_delta z / T + gamma' S^-1 Gamma_T S^-1 gamma`` (first term
    from coefficient estimation, second from factor estimation at the
    forecast origin, with S the scale stored in ``gcov_T``); the
    actual-value interval widens it by the innovation variance.
    """
    if not (0.0 < level < 1.0):
        raise DesignError(f"level must lie in (0, 1), got {level}")
    z = np.asarray(z_T_hat, dtype=float).ravel()
    if z.shape[0] != fit.delta_hat.shape[0]:
        raise DimensionError("z_T_hat length does not match the coefficient vector")
    gamma = np.asarray(gamma, dtype=float).ravel()
    y_hat = float(fit.delta_hat @ z)
    var_coef = float(z @ fit.Sigma_delta_hat @ z) / fit.T
    try:
        Sinv_g = np.linalg.solve(gcov_T.scale, gamma)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("factor scale matrix is singular") from exc
    var_factor = float(Sinv_g @ gcov_T.Gamma @ Sinv_g)
    var_cond = var_coef + var_factor
    if var_cond <= 0:
        raise NumericalDegeneracyError(f"degenerate forecast variance {var_cond:.3e}")
    sigma_cond = float(np.sqrt(var_cond))
    sigma_actual = float(np.sqrt(var_cond + fit.sigma_eps_hat))
    zq = normal_quantile(1.0 - (1.0 - level) / 2.0)
    return Forecast(
        y_hat=y_hat,
        sigma_cond=sigma_cond,
        sigma_actual=sigma_actual,
        level=level,
        cond_lower=y_hat - zq * sigma_cond,
        cond_upper=y_hat + zq * sigma_cond,
        actual_lower=y_hat - zq * sigma_actual,
        actual_upper=y_hat + zq * sigma_actual,
    )


def gamma_joint_q2(delta_gamma: np.ndarray, Sigma_gamma: np.ndarray, T: int) -> float:
    """Joint statistic ``T * d' Sigma^-1 d`` for the factor coefficients."""
    d = np.asarray(delta_gamma, dtype=float).ravel()
    S = np.asarray(Sigma_gamma, dtype=float)
    try:
        Sinv_d = np.linalg.solve(S, d)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("Sigma_gamma is singular") from exc
    return float(T * d @ Sinv_d)
