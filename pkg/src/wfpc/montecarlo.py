"""Replication engine for the simulation experiments.

Each experiment draws panels from the weak-factor generator over a grid
of strength designs and sample sizes, fits the PC estimator, and
aggregates per-replication metrics into means with Monte Carlo standard
errors. Replication j of grid cell c consumes the stream
``Philox(SeedSequence(base_seed, spawn_key=(c, j)))`` and nothing else,
so summaries are bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from threadpoolctl import threadpool_limits

from . import dgp
from .augreg import augreg_fit, gamma_joint_q2, infeasible_gamma
from .errors import DesignError, ReplicationFailureError, WfpcError
from .inference import FactorCov, LoadingCov, chi2_quantile, normal_quantile, q2_joint, z_common, z_factor, z_loading
from .pc import pc_fit
from .rotation import align_to_reference, data_rotations

SUMMARY_SCHEMA_VERSION = 1
SUMMARY_COLUMNS = (
    "experiment", "N", "T", "alpha1", "alpha2", "metric", "reference",
    "level", "mean", "mcse", "n_reps", "n_failed", "underpowered",
)

DEFAULT_STRUCTURAL_H = np.array([[1.0, 0.5], [0.5, 2.0]])
DEFAULT_DESIGNS = ((1.0, 1.0), (1.0, 0.9), (1.0, 0.8), (0.9, 0.7), (0.8, 0.6), (0.7, 0.5))
DEFAULT_SIZES = ((50, 50), (100, 100), (200, 200), (500, 500))


class Experiment(str, Enum):
    FACTOR_LOSSES = "factor-losses"
    JOINT_NORMALITY = "joint-normality"
    ELEMENT_TESTS = "element-tests"
    AUGREG_LOSSES = "augreg-losses"
    AUGREG_JOINT = "augreg-joint"
    AUGREG_TESTS = "augreg-tests"
    COVERAGE = "coverage"


def _default_augreg() -> dgp.AugRegDesign:
    return dgp.AugRegDesign(
        gamma0=(1.0, 1.0), beta=(1.0,), rho=(0.5,), sigma_w=(1.0,), sigma_eps=1.0, h=1
    )


@dataclass(frozen=True)
class McConfig:
    """Grid, replication count, and generator settings for one experiment run.

    ``designs`` are (alpha1, alpha2) strength pairs and ``sizes`` are
    (N, T) panel dimensions; every combination is one grid cell. The
    remaining fields fix the generator: two factors with uniform mean
    ``mu``, noise s.d. ``sigma_e`` (default sqrt(0.5)), structural mix
    ``structural_H``, plus the augmented-regression design for the
    regression experiments. ``levels`` are the confidence levels at which
    rejection/coverage indicators are evaluated.
    """

    experiment: Experiment
    designs: tuple[tuple[float, float], ...] = DEFAULT_DESIGNS
    sizes: tuple[tuple[int, int], ...] = ((50, 50), (100, 100), (200, 200))
    replications: int = 2000
    base_seed: int = 0
    levels: tuple[float, ...] = (0.95,)
    loading_mode: dgp.LoadingMode = dgp.LoadingMode.NONSPARSE
    mu: float = 1.0
    sigma_e: float = float(np.sqrt(0.5))
    structural_H: np.ndarray = field(default_factory=lambda: DEFAULT_STRUCTURAL_H.copy())
    augreg: dgp.AugRegDesign = field(default_factory=_default_augreg)
    workers: int = 1
    max_failure_rate: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "experiment", Experiment(self.experiment))
        object.__setattr__(self, "designs", tuple((float(a), float(b)) for a, b in self.designs))
        object.__setattr__(self, "sizes", tuple((int(n), int(t)) for n, t in self.sizes))
        object.__setattr__(self, "levels", tuple(float(p) for p in self.levels))
        object.__setattr__(self, "loading_mode", dgp.LoadingMode(self.loading_mode))
        object.__setattr__(self, "structural_H", np.asarray(self.structural_H, dtype=float))
        if self.replications < 1:
            raise DesignError(f"replications must be >= 1, got {self.replications}")
        if any(n < 10 or t < 10 for n, t in self.sizes):
            raise DesignError("all sizes must satisfy N >= 10 and T >= 10")
        if not self.designs:
            raise DesignError("at least one (alpha1, alpha2) design is required")
        if any(not (0 < p < 1) for p in self.levels):
            raise DesignError("levels must lie strictly in (0, 1)")
        if self.workers < 1:
            raise DesignError(f"workers must be >= 1, got {self.workers}")

    def factor_design(self, N: int, T: int, alphas: tuple[float, float]) -> dgp.FactorDesign:
        return dgp.FactorDesign(
            T=T, N=N, r=2, alphas=alphas, mu=(self.mu, self.mu),
            sigma_e=self.sigma_e, loading_mode=self.loading_mode,
            structural_H=self.structural_H, seed=self.base_seed,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        d = dict(d)
        if "augreg" in d and isinstance(d["augreg"], dict):
            d["augreg"] = dgp.AugRegDesign.from_dict(d["augreg"])
        if "designs" in d:
            d["designs"] = tuple(tuple(pair) for pair in d["designs"])
        if "sizes" in d:
            d["sizes"] = tuple(tuple(pair) for pair in d["sizes"])
        if "structural_H" in d:
            d["structural_H"] = np.asarray(d["structural_H"], dtype=float)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DesignError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment.value,
            "designs": [list(p) for p in self.designs],
            "sizes": [list(p) for p in self.sizes],
            "replications": self.replications,
            "base_seed": self.base_seed,
            "levels": list(self.levels),
            "loading_mode": self.loading_mode.value,
            "mu": self.mu,
            "sigma_e": self.sigma_e,
            "structural_H": self.structural_H.tolist(),
            "augreg": self.augreg.to_dict(),
            "workers": self.workers,
            "max_failure_rate": self.max_failure_rate,
        }


@dataclass(frozen=True)
class McCell:
    """Aggregated value of one metric in one grid cell."""

    experiment: str
    N: int
    T: int
    alpha1: float
    alpha2: float
    metric: str
    reference: str
    level: float | None
    mean: float
    mcse: float | None
    n_reps: int
    n_failed: int

    @property
    def underpowered(self) -> bool:
        if self.mcse is None or not np.isfinite(self.mcse):
            return True
        return self.mcse > abs(self.mean) / 10.0


@dataclass
class McSummary:
    """All aggregated cells of one run plus the failure log."""

    config: McConfig
    cells: list[McCell]
    failures: list[dict]

    def value(self, metric: str, reference: str, N: int, T: int,
              design: tuple[float, float], level: float | None = None) -> McCell:
        for c in self.cells:
            if (c.metric == metric and c.reference == reference and c.N == N
                    and c.T == T and (c.alpha1, c.alpha2) == design
                    and (level is None or c.level == level)):
                return c
        raise KeyError(f"no cell for {metric}/{reference} at N={N}, T={T}, {design}, level={level}")

    def as_records(self) -> list[dict]:
        return [
            {
                "experiment": c.experiment, "N": c.N, "T": c.T,
                "alpha1": c.alpha1, "alpha2": c.alpha2,
                "metric": c.metric, "reference": c.reference,
                "level": "" if c.level is None else c.level,
                "mean": c.mean,
                "mcse": "" if c.mcse is None or not np.isfinite(c.mcse) else c.mcse,
                "n_reps": c.n_reps, "n_failed": c.n_failed,
                "underpowered": c.underpowered,
            }
            for c in self.cells
        ]


def _rep_rng(base_seed: int, cell_index: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(cell_index, rep))
    return np.random.Generator(np.random.Philox(ss))


def _fit_aligned(panel: dgp.Panel, r: int):
    fit = pc_fit(panel.X, r)
    return align_to_reference(fit, panel.F0)


def _factor_losses_rep(design: dgp.FactorDesign, cfg: McConfig, rng) -> dict:
    panel = dgp.assemble_panel(design, rng)
    fit = _fit_aligned(panel, design.r)
    rots = data_rotations(panel.F_star, panel.B_star, panel.F0, panel.B0, fit)
    sqT, sqN = np.sqrt(design.T), np.sqrt(design.N)
    C_star = panel.F0 @ panel.B0.T
    B_H = np.linalg.solve(rots.H_hat, panel.B_star.T).T  # B* inv(H_hat)'
    return {
        ("loss_F", "pseudo_true", None): np.linalg.norm(fit.F_hat - panel.F0, "fro") / sqT,
        ("loss_F", "H4", None): np.linalg.norm(fit.F_hat - panel.F_star @ rots.H_hat4, "fro") / sqT,
        ("loss_F", "H", None): np.linalg.norm(fit.F_hat - panel.F_star @ rots.H_hat, "fro") / sqT,
        ("loss_B", "pseudo_true", None): np.linalg.norm(fit.B_hat - panel.B0, "fro") / sqN,
        ("loss_B", "Q", None): np.linalg.norm(fit.B_hat - panel.B_star @ rots.Q_hat.T, "fro") / sqN,
        ("loss_B", "H", None): np.linalg.norm(fit.B_hat - B_H, "fro") / sqN,
        ("loss_C", "star", None): np.linalg.norm(fit.C_hat - C_star, "fro") / (sqN * sqT),
    }


def _joint_normality_rep(design: dgp.FactorDesign, cfg: McConfig, rng) -> dict:
    panel = dgp.assemble_panel(design, rng)
    fit = _fit_aligned(panel, design.r)
    rots = data_rotations(panel.F_star, panel.B_star, panel.F0, panel.B0, fit)
    r = design.r
    sig2 = design.sigma_e**2
    Gamma = sig2 * np.eye(r)
    Phi = sig2 * np.eye(r)
    S = np.diag(np.sqrt(np.diag(panel.B0.T @ panel.B0)))
    f_hat1, f0_1, fs_1 = fit.F_hat[0], panel.F0[0], panel.F_star[0]
    b_hat1, b0_1, bs_1 = fit.B_hat[0], panel.B0[0], panel.B_star[0]
    deltas_f = {
        "pseudo_true": f_hat1 - f0_1,
        "H4": f_hat1 - rots.H_hat4.T @ fs_1,
        "H": f_hat1 - rots.H_hat.T @ fs_1,
    }
    deltas_b = {
        "pseudo_true": b_hat1 - b0_1,
        "Q": b_hat1 - rots.Q_hat @ bs_1,
        "H": b_hat1 - np.linalg.solve(rots.H_hat, bs_1),
    }
    out = {}
    for level in cfg.levels:
        crit = chi2_quantile(r, level)
        for ref, dlt in deltas_f.items():
            out[("Qf2_reject", ref, level)] = float(q2_joint(dlt, Gamma, scale=S) > crit)
        for ref, dlt in deltas_b.items():
            out[("Qb2_reject", ref, level)] = float(q2_joint(dlt, Phi, T=design.T) > crit)
    return out


def _element_tests_rep(design: dgp.FactorDesign, cfg: McConfig, rng) -> dict:
    panel = dgp.assemble_panel(design, rng)
    fit = _fit_aligned(panel, design.r)
    r = design.r
    sig2 = design.sigma_e**2
    gcov = FactorCov(Gamma=sig2 * np.eye(r), scale=np.diag(np.sqrt(np.diag(panel.B0.T @ panel.B0))), t=1)
    lcov = LoadingCov(Phi=sig2 * np.eye(r), bandwidth=0, i=1)
    c_star_11 = float(panel.F0[0] @ panel.B0[0])
    zs = {}
    for k in range(1, r + 1):
        zs[f"zf_reject_k{k}"] = z_factor(fit, 1, k, panel.F0[0, k - 1], gcov)
        zs[f"zb_reject_k{k}"] = z_loading(fit, 1, k, panel.B0[0, k - 1], lcov)
    z_c = z_common(fit, 1, 1, c_star_11, gcov, lcov, b_i=panel.B0[0], f_t=panel.F0[0])
    out = {}
    for level in cfg.levels:
        crit = normal_quantile(1.0 - (1.0 - level) / 2.0)
        for name, z in zs.items():
            ref = "pseudo_true"
            out[(name, ref, level)] = float(abs(z) > crit)
        out[("zc_reject", "star", level)] = float(abs(z_c) > crit)
    return out


def _augreg_rep(design: dgp.FactorDesign, cfg: McConfig, rng) -> dict:
    panel = dgp.assemble_panel(design, rng)
    areg = cfg.augreg
    data = dgp.gen_augreg(panel.F0, areg, rng)
    fit = _fit_aligned(panel, design.r)
    rots = data_rotations(panel.F_star, panel.B_star, panel.F0, panel.B0, fit)
    h = areg.h
    T_reg = design.T - h
    r = design.r
    gamma0 = np.asarray(areg.gamma0)
    gamma_star = design.structural_H @ gamma0
    ys, F0s, Fhs, Ws = data.y[:T_reg], panel.F0[:T_reg], fit.F_hat[:T_reg], data.W[:T_reg]

    gamma_inf = infeasible_gamma(ys, F0s, Ws, h)
    afit = augreg_fit(ys, Fhs, Ws, h)
    gamma_feas = afit.gamma_hat
    gamma_H = np.linalg.solve(rots.H_hat, gamma_star)

    # oracle covariance of sqrt(T) * (gamma - gamma0): controls projected out
    if Ws.shape[1] > 0:
        F_proj = F0s - Ws @ np.linalg.solve(Ws.T @ Ws, Ws.T @ F0s)
    else:
        F_proj = F0s
    Sigma_gamma = areg.sigma_eps**2 * np.linalg.inv(F_proj.T @ F_proj / T_reg)
    Sigma_gamma_inv = np.linalg.inv(Sigma_gamma)

    deltas = {
        "infeasible": gamma_inf - gamma0,
        "pseudo_true": gamma_feas - gamma0,
        "H": gamma_feas - gamma_H,
    }
    out = {}
    for ref, dlt in deltas.items():
        out[("loss_gamma", ref, None)] = float(np.linalg.norm(dlt))

    # forecast pieces: origin is the last full-sample row (t = T)
    z0_T = np.concatenate([panel.F0[-1], data.W[-1]])
    zhat_T = np.concatenate([fit.F_hat[-1], data.W[-1]])
    delta0 = np.concatenate([gamma0, np.asarray(areg.beta)])
    delta_hat = afit.delta_hat
    y_cond = float(delta0 @ z0_T)
    y_actual = float(data.y[-1])
    y_hat = float(delta_hat @ zhat_T)
    Z0 = np.hstack([panel.F0, data.W])
    B0tB0 = panel.B0.T @ panel.B0
    var_cond = (
        areg.sigma_eps**2 * float(z0_T @ np.linalg.solve(Z0.T @ Z0, z0_T))
        + design.sigma_e**2 * float(gamma0 @ np.linalg.solve(B0tB0, gamma0))
    )
    sd_cond = np.sqrt(var_cond)
    sd_actual = np.sqrt(var_cond + areg.sigma_eps**2)

    for level in cfg.levels:
        crit = chi2_quantile(r, level)
        for ref, dlt in deltas.items():
            out[("Qgamma2_reject", ref, level)] = float(
                gamma_joint_q2(dlt, Sigma_gamma, T_reg) > crit
            )
        zq = normal_quantile(1.0 - (1.0 - level) / 2.0)
        for ref in ("infeasible", "pseudo_true"):
            dlt = deltas[ref]
            for k in range(1, r + 1):
                z = np.sqrt(T_reg * Sigma_gamma_inv[k - 1, k - 1]) * dlt[k - 1]
                out[(f"zgamma_reject_k{k}", ref, level)] = float(abs(z) > zq)
        out[("cover_mean", "oracle", level)] = float(abs(y_hat - y_cond) <= zq * sd_cond)
        out[("cover_actual", "oracle", level)] = float(abs(y_hat - y_actual) <= zq * sd_actual)
    return out


_REP_FNS = {
    Experiment.FACTOR_LOSSES: _factor_losses_rep,
    Experiment.JOINT_NORMALITY: _joint_normality_rep,
    Experiment.ELEMENT_TESTS: _element_tests_rep,
    Experiment.AUGREG_LOSSES: _augreg_rep,
    Experiment.AUGREG_JOINT: _augreg_rep,
    Experiment.AUGREG_TESTS: _augreg_rep,
    Experiment.COVERAGE: _augreg_rep,
}

_METRIC_FILTERS = {
    Experiment.AUGREG_LOSSES: ("loss_gamma",),
    Experiment.AUGREG_JOINT: ("Qgamma2_reject",),
    Experiment.AUGREG_TESTS: ("zgamma_reject",),
    Experiment.COVERAGE: ("cover_mean", "cover_actual"),
}


def _run_rep(args) -> tuple[int, bool, object]:
    cfg, design, cell_index, rep = args
    rng = _rep_rng(cfg.base_seed, cell_index, rep)
    try:
        return rep, True, _REP_FNS[cfg.experiment](design, cfg, rng)
    except WfpcError as exc:
        return rep, False, (type(exc).__name__, str(exc))


def _run_chunk(payload) -> list[tuple[int, bool, object]]:
    cfg, design, cell_index, reps = payload
    # replication matrices are small: extra BLAS threads only burn cycles
    with threadpool_limits(limits=1):
        return [_run_rep((cfg, design, cell_index, rep)) for rep in reps]


def run_mc(cfg: McConfig, filter_metrics: bool = True) -> McSummary:
    """Run one experiment over the full (size x design) grid.

    ``filter_metrics=False`` reports every metric the replication
    function produces (the regression experiments share one function
    computing losses, joint and per-coefficient rejections, and
    coverage).

    Raises
    ------
    ReplicationFailureError
        If more than ``max_failure_rate`` of the replications in any grid
        cell fail.
    """
    cells: list[McCell] = []
    failures: list[dict] = []
    cell_index = 0
    for N, T in cfg.sizes:
        for alphas in cfg.designs:
            design = cfg.factor_design(N, T, alphas)
            results = _run_cell(cfg, design, cell_index)
            _aggregate_cell(cfg, design, results, cells, failures, filter_metrics)
            cell_index += 1
    return McSummary(config=cfg, cells=cells, failures=failures)


def _run_cell(cfg: McConfig, design: dgp.FactorDesign, cell_index: int):
    R = cfg.replications
    if cfg.workers == 1:
        return _run_chunk((cfg, design, cell_index, range(R)))
    chunk = max(1, R // (cfg.workers * 8))
    payloads = [
        (cfg, design, cell_index, range(start, min(start + chunk, R)))
        for start in range(0, R, chunk)
    ]
    out: list = []
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        for part in pool.map(_run_chunk, payloads):
            out.extend(part)
    out.sort(key=lambda item: item[0])
    return out


def _aggregate_cell(cfg, design, results, cells, failures, filter_metrics=True) -> None:
    ok_values = [values for _, ok, values in results if ok]
    n_failed = len(results) - len(ok_values)
    for rep, ok, payload in results:
        if not ok:
            failures.append({
                "experiment": cfg.experiment.value, "N": design.N, "T": design.T,
                "alpha1": design.alphas[0], "alpha2": design.alphas[1],
                "replication": rep, "error": payload[0], "message": payload[1],
            })
    if n_failed > cfg.max_failure_rate * len(results):
        raise ReplicationFailureError(
            f"{n_failed}/{len(results)} replications failed at N={design.N}, "
            f"T={design.T}, alphas={design.alphas}"
        )
    if not ok_values:
        raise ReplicationFailureError("every replication failed")
    keys = list(ok_values[0].keys())
    prefixes = _METRIC_FILTERS.get(cfg.experiment) if filter_metrics else None
    arr = np.array([[v[k] for k in keys] for v in ok_values])
    n = arr.shape[0]
    for col, (metric, reference, level) in enumerate(keys):
        if prefixes is not None and not any(metric.startswith(p) for p in prefixes):
            continue
        vals = arr[:, col]
        mean = float(vals.mean())
        mcse = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else None
        cells.append(McCell(
            experiment=cfg.experiment.value, N=design.N, T=design.T,
            alpha1=design.alphas[0], alpha2=design.alphas[1],
            metric=metric, reference=reference, level=level,
            mean=mean, mcse=mcse, n_reps=n, n_failed=n_failed,
        ))


def run_factor_mc(cfg: McConfig) -> McSummary:
    """Norm losses of the PC estimator against each reference rotation."""
    return run_mc(replace(cfg, experiment=Experiment.FACTOR_LOSSES))


def run_joint_normality_mc(cfg: McConfig) -> McSummary:
    """Rejection frequencies of the joint chi-square statistics."""
    return run_mc(replace(cfg, experiment=Experiment.JOINT_NORMALITY))


def run_element_tests_mc(cfg: McConfig) -> McSummary:
    """Sizes of the per-element z tests for factors, loadings, common part."""
    return run_mc(replace(cfg, experiment=Experiment.ELEMENT_TESTS))


def run_augreg_mc(cfg: McConfig) -> McSummary:
    """Losses, joint and per-coefficient sizes, and forecast coverage
    for the factor-augmented regression, all in one pass."""
    exp = cfg.experiment if cfg.experiment in _METRIC_FILTERS else Experiment.AUGREG_JOINT
    return run_mc(replace(cfg, experiment=exp), filter_metrics=False)
