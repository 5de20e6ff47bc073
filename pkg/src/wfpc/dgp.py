"""Synthetic weak-factor panels and augmented-regression targets.

The generator follows the standard simulation design for weak-factor
panels: uniform factors scaled to exact orthonormality, deterministic
loading patterns whose column norms grow like ``N**alpha_k``, Gaussian
idiosyncratic noise, and an invertible structural mix so that the
observationally equivalent structural pair ``(F*, B*)`` differs from the
identified pair ``(F0, B0)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateInputError, DesignError, DimensionError

SQRT3 = np.sqrt(3.0)


class LoadingMode(str, Enum):
    NONSPARSE = "nonsparse"
    SPARSE = "sparse"


@dataclass(frozen=True)
class FactorDesign:
    """Parameters of one synthetic panel.

    Parameters
    ----------
    T, N : int
        Time-series and cross-section dimensions.
    r : int
        Number of factors.
    alphas : tuple of float
        Strength exponents, non-increasing, each in (0, 1]. The k-th
        loading column has squared norm proportional to ``N**alphas[k]``.
    mu : tuple of float
        Means of the uniform factor draws, one per factor.
    sigma_e : float
        Standard deviation of the idiosyncratic noise (>= 0).
    loading_mode : LoadingMode
        Dense half-pattern loadings or sparse block loadings.
    structural_H : ndarray, shape (r, r)
        Invertible mix applied to build the structural pair from the
        identified one: ``F* = F0 @ inv(H)``, ``B* = B0 @ H.T``.
    seed : int
        Seed for the default random stream.
    """

    T: int
    N: int
    r: int
    alphas: tuple[float, ...]
    mu: tuple[float, ...]
    sigma_e: float
    loading_mode: LoadingMode = LoadingMode.NONSPARSE
    structural_H: np.ndarray = field(default=None)  # type: ignore[assignment]
    seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.N < 2:
            raise DesignError(f"need T >= 1 and N >= 2, got T={self.T}, N={self.N}")
        if self.r < 1:
            raise DesignError(f"r must be positive, got {self.r}")
        if self.T < self.r:
            raise DesignError(f"need T >= r, got T={self.T}, r={self.r}")
        alphas = tuple(float(a) for a in self.alphas)
        mu = tuple(float(m) for m in self.mu)
        if len(alphas) != self.r or len(mu) != self.r:
            raise DesignError("alphas and mu must have length r")
        if any(not (0.0 < a <= 1.0) for a in alphas):
            raise DesignError(f"alphas must lie in (0, 1], got {alphas}")
        if any(a < b for a, b in zip(alphas, alphas[1:])):
            raise DesignError(f"alphas must be non-increasing, got {alphas}")
        if self.sigma_e < 0:
            raise DesignError(f"sigma_e must be >= 0, got {self.sigma_e}")
        mode = LoadingMode(self.loading_mode)
        object.__setattr__(self, "loading_mode", mode)
        if mode is LoadingMode.SPARSE:
            for a in alphas:
                if self.N**a < 2:
                    raise DesignError(
                        f"sparse mode needs N**alpha >= 2; N={self.N}, alpha={a}"
                    )
        H = self.structural_H
        H = np.eye(self.r) if H is None else np.asarray(H, dtype=float)
        if H.shape != (self.r, self.r):
            raise DimensionError(f"structural_H must be {self.r}x{self.r}, got {H.shape}")
        # reject near-singular mixes: reciprocal condition below 1e-12
        svals = np.linalg.svd(H, compute_uv=False)
        if svals[-1] <= 1e-12 * svals[0]:
            raise DesignError("structural_H is singular or too ill-conditioned")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "structural_H", H)

    @classmethod
    def from_dict(cls, d: dict) -> "FactorDesign":
        keys = {"T", "N", "r", "alphas", "mu", "sigma_e", "loading_mode", "structural_H", "seed"}
        unknown = set(d) - keys
        if unknown:
            raise DesignError(f"unknown design keys: {sorted(unknown)}")
        missing = {"T", "N", "r", "alphas", "mu", "sigma_e"} - set(d)
        if missing:
            raise DesignError(f"missing design keys: {sorted(missing)}")
        return cls(
            T=int(d["T"]),
            N=int(d["N"]),
            r=int(d["r"]),
            alphas=tuple(d["alphas"]),
            mu=tuple(d["mu"]),
            sigma_e=float(d["sigma_e"]),
            loading_mode=LoadingMode(d.get("loading_mode", "nonsparse")),
            structural_H=np.asarray(d["structural_H"], dtype=float) if "structural_H" in d else None,
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "N": self.N,
            "r": self.r,
            "alphas": list(self.alphas),
            "mu": list(self.mu),
            "sigma_e": self.sigma_e,
            "loading_mode": self.loading_mode.value,
            "structural_H": self.structural_H.tolist(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class AugRegDesign:
    """Parameters of the augmented-regression target equation.

    ``y[t+h] = f0_t' gamma0 + w_t' beta + eps[t+h]`` with controls
    ``w[t, l] = sum_k rho[l] * (f0[t, k] - mean_k) + noise``, where
    ``mean_k`` is the sample mean of factor column k.
    """

    gamma0: tuple[float, ...]
    beta: tuple[float, ...] = ()
    rho: tuple[float, ...] = ()
    sigma_w: tuple[float, ...] = ()
    sigma_eps: float = 1.0
    h: int = 1

    def __post_init__(self):
        gamma0 = tuple(float(g) for g in self.gamma0)
        beta = tuple(float(b) for b in self.beta)
        rho = tuple(float(p) for p in self.rho)
        sigma_w = tuple(float(s) for s in self.sigma_w)
        L = len(beta)
        if len(rho) != L or len(sigma_w) != L:
            raise DesignError("beta, rho, sigma_w must share length L")
        if any(s <= 0 for s in sigma_w):
            raise DesignError("sigma_w entries must be positive")
        if self.sigma_eps < 0:
            raise DesignError(f"sigma_eps must be >= 0, got {self.sigma_eps}")
        if self.h < 1:
            raise DesignError(f"h must be a positive horizon, got {self.h}")
        object.__setattr__(self, "gamma0", gamma0)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "sigma_w", sigma_w)

    @property
    def L(self) -> int:
        return len(self.beta)

    @classmethod
    def from_dict(cls, d: dict) -> "AugRegDesign":
        keys = {"gamma0", "beta", "rho", "sigma_w", "sigma_eps", "h"}
        unknown = set(d) - keys
        if unknown:
            raise DesignError(f"unknown augmented-regression keys: {sorted(unknown)}")
        return cls(
            gamma0=tuple(d["gamma0"]),
            beta=tuple(d.get("beta", ())),
            rho=tuple(d.get("rho", ())),
            sigma_w=tuple(d.get("sigma_w", ())),
            sigma_eps=float(d.get("sigma_eps", 1.0)),
            h=int(d.get("h", 1)),
        )

    def to_dict(self) -> dict:
        return {
            "gamma0": list(self.gamma0),
            "beta": list(self.beta),
            "rho": list(self.rho),
            "sigma_w": list(self.sigma_w),
            "sigma_eps": self.sigma_eps,
            "h": self.h,
        }


@dataclass(frozen=True)
class Panel:
    """One generated panel and every matrix used to build it."""

    X: np.ndarray
    F_star: np.ndarray
    B_star: np.ndarray
    F0: np.ndarray
    B0: np.ndarray
    E: np.ndarray


@dataclass(frozen=True)
class AugRegData:
    """Targets and controls for one augmented-regression sample.

    ``y[t-1]`` holds the value dated ``t + h`` for t = 1..T, so row t of
    the factor/control matrices pairs with ``y[t-1]``.
    """

    y: np.ndarray
    W: np.ndarray
    h: int


def gen_factors(design: FactorDesign, rng: np.random.Generator) -> np.ndarray:
    """Draw the raw T x r factor matrix, entries uniform with unit variance.

    Entry (t, k) is uniform on ``[mu_k - sqrt(3), mu_k + sqrt(3)]``, so each
    column has population mean ``mu_k`` and population variance 1.
    """
    mu = np.asarray(design.mu)
    return rng.uniform(-SQRT3, SQRT3, size=(design.T, design.r)) + mu[None, :]


def gram_schmidt_scale(F: np.ndarray) -> np.ndarray:
    """Orthonormalize columns in order so that ``F0.T @ F0 / T = I``.

    Modified Gram-Schmidt with one re-orthogonalization pass; columns keep
    the orientation of their residual (no sign flips), and the column span
    is unchanged.

    Raises
    ------
    DegenerateInputError
        If some column is numerically in the span of the previous ones
        (residual norm below ``1e-12 * sqrt(T)``).
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise DimensionError("F must be a 2-d array")
    T, r = F.shape
    sqT = np.sqrt(T)
    Q = F.copy()
    for k in range(r):
        v = Q[:, k]
        for _ in range(2):  # second pass keeps orthogonality loss near eps
            for j in range(k):
                v = v - (Q[:, j] @ v) / T * Q[:, j]
        nrm = np.linalg.norm(v)
        if nrm < 1e-12 * sqT:
            raise DegenerateInputError(f"column {k + 1} is rank deficient after projection")
        Q[:, k] = v * (sqT / nrm)
    return Q


def _nearest_even(x: float) -> int:
    """Closest even integer to x; exact ties round upward."""
    half = x / 2.0
    lo, hi = 2 * int(np.floor(half)), 2 * int(np.ceil(half))
    if x - lo < hi - x:
        return lo
    return hi


def _alternating_signs(length: int, n_blocks: int) -> np.ndarray:
    """+1/-1 over ``n_blocks`` near-equal contiguous blocks."""
    signs = np.empty(length)
    for m, idx in enumerate(np.array_split(np.arange(length), n_blocks)):
        signs[idx] = -1.0 if m % 2 else 1.0
    return signs


def gen_loadings(design: FactorDesign) -> np.ndarray:
    """Deterministic N x r loading matrix with column-k strength ``N**alpha_k``.

    Dense mode, first two columns: column 1 equals ``N**((a1-1)/2)`` times
    (2 on the first half of the cross-section, 1 on the rest); column 2
    equals ``N**((a2-1)/2)`` times (1/2 on the first half, -1 on the rest).
    Sparse mode: column 1 is 2 on the first ``N_1`` units, column 2 is +1 /
    -1 on the two halves of the first ``N_2`` units, where ``N_k`` is the
    even integer closest to ``N**alpha_k``.

    Columns beyond the second repeat the two base patterns with signs
    alternating over progressively finer blocks. This is a toolkit
    extension of the two-factor design; the extended columns are exactly
    orthogonal only when the block sizes divide evenly, and their norms
    need not decrease with k, so for r > 2 the generated pair may satisfy
    the identification restrictions only approximately.
    """
    N, r = design.N, design.r
    half = (N + 1) // 2  # odd N: first half gets the extra unit
    B = np.empty((N, r))
    for k in range(1, r + 1):
        a = design.alphas[k - 1]
        template = 1 if k % 2 else 2
        level = (k + 1) // 2
        g = np.empty(N)
        if design.loading_mode is LoadingMode.NONSPARSE:
            if template == 1:
                g[:half], g[half:] = 2.0, 1.0
            else:
                g[:half], g[half:] = 0.5, -1.0
            if level > 1:
                g[:half] *= _alternating_signs(half, 2 ** (level - 1))
                g[half:] *= _alternating_signs(N - half, 2 ** (level - 1))
            B[:, k - 1] = N ** ((a - 1) / 2.0) * g
        else:
            Nk = _nearest_even(N**a)
            if Nk > N:
                raise DesignError(
                    f"sparse support N_{k} = {Nk} exceeds N = {N} (alpha={a})"
                )
            g[:] = 0.0
            if template == 1:
                g[:Nk] = 2.0
                if level > 1:
                    g[:Nk] *= _alternating_signs(Nk, 2**level)
            else:
                g[: Nk // 2], g[Nk // 2 : Nk] = 1.0, -1.0
                if level > 1:
                    g[: Nk // 2] *= _alternating_signs(Nk // 2, 2 ** (level - 1))
                    g[Nk // 2 : Nk] *= _alternating_signs(Nk - Nk // 2, 2 ** (level - 1))
            B[:, k - 1] = g
    return B


def _check_identified(F0: np.ndarray, B0: np.ndarray) -> None:
    """Warn when the generated pair misses the identification restrictions."""
    BtB = B0.T @ B0
    d = np.diag(BtB)
    off = BtB - np.diag(d)
    denom = np.sqrt(np.outer(d, d))
    if np.any(np.abs(off) > 1e-8 * denom):
        warnings.warn(
            "generated loading columns are not exactly orthogonal; the pair "
            "(F0, B0) is only an approximate identified parametrization",
            stacklevel=3,
        )
    elif np.any(np.diff(d) > 0):
        warnings.warn(
            "generated loading column norms are not descending; the pair "
            "(F0, B0) is only an approximate identified parametrization",
            stacklevel=3,
        )


def assemble_panel(design: FactorDesign, rng: np.random.Generator | None = None) -> Panel:
    """Generate a full panel ``X = F* B*' + E``.

    Stream consumption order is fixed: first the T x r factor uniforms,
    then the T x N noise normals. ``F0`` is the orthonormal-scaled factor
    matrix, ``B0`` the deterministic loadings, and the structural pair is
    ``F* = F0 @ inv(H)``, ``B* = B0 @ H.T``, so ``F* B*' = F0 B0'`` holds
    by construction.
    """
    if rng is None:
        rng = np.random.default_rng(design.seed)
    F0 = gram_schmidt_scale(gen_factors(design, rng))
    B0 = gen_loadings(design)
    if design.r > 2 or design.N % 2:
        _check_identified(F0, B0)
    H = design.structural_H
    F_star = np.linalg.solve(H.T, F0.T).T  # F0 @ inv(H)
    B_star = B0 @ H.T
    E = design.sigma_e * rng.standard_normal((design.T, design.N))
    X = F_star @ B_star.T + E
    return Panel(X=X, F_star=F_star, B_star=B_star, F0=F0, B0=B0, E=E)


def gen_augreg(F0: np.ndarray, areg: AugRegDesign, rng: np.random.Generator) -> AugRegData:
    """Generate targets and controls from the identified factors.

    Controls load on the in-sample-centered factors,
    ``w[t, l] = rho_l * sum_k (f0[t, k] - mean_k) + N(0, sigma_w_l**2)``;
    targets are ``y[t+h] = f0_t' gamma0 + w_t' beta + N(0, sigma_eps**2)``.
    Stream order: the T x L control noise block, then the T target noise
    draws (L = 0 consumes no control noise).
    """
    F0 = np.asarray(F0, dtype=float)
    T, r = F0.shape
    if len(areg.gamma0) != r:
        raise DimensionError(f"gamma0 has length {len(areg.gamma0)}, factors have r={r}")
    L = areg.L
    centered = F0 - F0.mean(axis=0, keepdims=True)
    rho = np.asarray(areg.rho)
    sigma_w = np.asarray(areg.sigma_w)
    W = centered.sum(axis=1)[:, None] * rho[None, :] + rng.standard_normal((T, L)) * sigma_w[None, :]
    eps = areg.sigma_eps * rng.standard_normal(T)
    y = F0 @ np.asarray(areg.gamma0) + W @ np.asarray(areg.beta) + eps
    return AugRegData(y=y, W=W, h=areg.h)
