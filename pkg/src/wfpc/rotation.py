"""Rotations between structural, identified, and estimated parametrizations.

``pseudo_true_rotation`` builds, from the structural pair ``(F*, B*)``
alone, the unique (up to column signs) matrix H such that ``F0 = F* H``
and ``B0 = B* inv(H)'`` satisfy the identification restrictions
``F0'F0/T = I`` and ``B0'B0`` diagonal with distinct descending entries.
``data_rotations`` computes the familiar estimator-dependent rotation
matrices used as diagnostics, and ``align_to_reference`` resolves the
sign/order indeterminacy of a PC fit against a reference factor matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousAlignmentError,
    DegenerateInputError,
    DimensionError,
    NearDegenerateEigenvaluesError,
    SingularRotationError,
)
from .pc import PcFit, fix_column_signs

EIGEN_GAP_TOL = 1e-8


@dataclass(frozen=True)
class PseudoTrueRotation:
    """Rotation from the structural to the identified parametrization.

    ``Lambda`` holds the eigenvalues of ``B*'B* (F*'F*/T)`` in descending
    order; they equal the diagonal of ``B0'B0``. ``eigen_gap`` is the
    smallest relative gap between consecutive eigenvalues (inf if r = 1).
    """

    H: np.ndarray
    F0: np.ndarray
    B0: np.ndarray
    Lambda: np.ndarray
    eigen_gap: float

    @property
    def r(self) -> int:
        return self.H.shape[0]

    def to_dict(self) -> dict:
        return {
            "H": self.H.tolist(),
            "Lambda": self.Lambda.tolist(),
            "eigen_gap": self.eigen_gap,
        }


@dataclass(frozen=True)
class RotationSet:
    """The estimator-dependent rotation matrices.

    Loading-based: ``H_hat4 = B*'B_hat inv(L_hat)`` and its identified
    twin ``H_tilde4 = B0'B_hat inv(L_hat)``. Factor-based: ``Q_hat =
    F_hat'F*/T`` and ``Q_tilde = F_hat'F0/T``. Mixed: ``H_hat = B*'B*
    (F*'F_hat/T) inv(L_hat)`` and ``H_tilde`` its identified twin. The
    auxiliary ``H_tilde1 = (B0'B0) inv(B_hat'B0)`` and ``H_tilde3 =
    inv(F_hat'F0/T)`` complete the set; ``H_tilde2 = Q_tilde'`` is exposed
    as a property.
    """

    H_hat: np.ndarray
    H_hat4: np.ndarray
    H_tilde4: np.ndarray
    Q_hat: np.ndarray
    Q_tilde: np.ndarray
    H_tilde: np.ndarray
    H_tilde1: np.ndarray
    H_tilde3: np.ndarray

    @property
    def H_tilde2(self) -> np.ndarray:
        return self.Q_tilde.T

    def to_dict(self) -> dict:
        return {
            name: getattr(self, name).tolist()
            for name in (
                "H_hat", "H_hat4", "H_tilde4", "Q_hat", "Q_tilde",
                "H_tilde", "H_tilde1", "H_tilde3",
            )
        }


def _symmetric_root(A: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and inverse root of an SPD matrix."""
    w, V = np.linalg.eigh((A + A.T) / 2.0)
    if w[0] <= 1e-14 * max(w[-1], 1.0):
        raise DegenerateInputError(f"{what} is numerically rank deficient")
    sq = np.sqrt(w)
    return (V * sq) @ V.T, (V / sq) @ V.T


def pseudo_true_rotation(F_star: np.ndarray, B_star: np.ndarray) -> PseudoTrueRotation:
    """Rotation making the structural pair satisfy the identification restrictions.

    Computation route: with ``A = F*'F*/T``, take the orthonormal
    eigenvectors W of the symmetric matrix ``A^{1/2} (B*'B*) A^{1/2}`` in
    descending eigenvalue order and set ``H = A^{-1/2} W``. Column signs
    are fixed so that each column of ``F0 = F* H`` has its largest-
    magnitude entry positive (ties to the lowest row index).

    Raises
    ------
    DegenerateInputError
        F* or B* numerically rank deficient.
    NearDegenerateEigenvaluesError
        Relative gap between consecutive eigenvalues below 1e-8, which
        leaves the eigenvector basis (and hence H) undetermined.
    """
    F_star = np.asarray(F_star, dtype=float)
    B_star = np.asarray(B_star, dtype=float)
    if F_star.ndim != 2 or B_star.ndim != 2 or F_star.shape[1] != B_star.shape[1]:
        raise DimensionError("F* and B* must be 2-d with the same number of columns")
    T = F_star.shape[0]
    A = F_star.T @ F_star / T
    A_half, A_invhalf = _symmetric_root(A, "F*'F*/T")
    BtB = B_star.T @ B_star
    if np.linalg.eigvalsh((BtB + BtB.T) / 2.0)[0] <= 1e-14 * max(np.abs(BtB).max(), 1.0):
        raise DegenerateInputError("B*'B* is numerically rank deficient")
    M = A_half @ BtB @ A_half
    w, W = np.linalg.eigh((M + M.T) / 2.0)
    lam = w[::-1]
    W = W[:, ::-1]
    r = lam.shape[0]
    if r > 1:
        rel_gaps = (lam[:-1] - lam[1:]) / lam[:-1]
        eigen_gap = float(rel_gaps.min())
        if eigen_gap < EIGEN_GAP_TOL:
            raise NearDegenerateEigenvaluesError(
                f"consecutive eigenvalues too close (relative gap {eigen_gap:.2e})"
            )
    else:
        eigen_gap = float("inf")
    H = A_invhalf @ W
    F0 = F_star @ H
    signs = fix_column_signs(F0)
    H = H * signs[None, :]
    B0 = B_star @ (A_half @ W) * signs[None, :]  # B* inv(H)' with the same flips
    rot = PseudoTrueRotation(H=H, F0=F0, B0=B0, Lambda=lam.copy(), eigen_gap=eigen_gap)
    _validate_pseudo_true(rot, T)
    return rot


def _validate_pseudo_true(rot: PseudoTrueRotation, T: int) -> None:
    r = rot.r
    ortho = rot.F0.T @ rot.F0 / T - np.eye(r)
    if np.abs(ortho).max() > 1e-8:
        raise DegenerateInputError("rotated factors fail the orthonormality restriction")
    BtB = rot.B0.T @ rot.B0
    d = np.sqrt(np.outer(rot.Lambda, rot.Lambda))
    off = (BtB - np.diag(np.diag(BtB))) / d
    if np.abs(off).max() > 1e-8:
        raise DegenerateInputError("rotated loadings fail the diagonality restriction")
    if np.abs(np.diag(BtB) - rot.Lambda).max() > 1e-8 * rot.Lambda[0]:
        raise DegenerateInputError("rotated loading norms do not match the eigenvalues")


def data_rotations(
    F_star: np.ndarray,
    B_star: np.ndarray,
    F0: np.ndarray,
    B0: np.ndarray,
    pc: PcFit,
) -> RotationSet:
    """All estimator-dependent rotation matrices for one fitted panel.

    The two parametrizations must describe the same panel the fit was run
    on (``F* B*' = F0 B0'``), which makes the structural and identified
    versions of each rotation produce the same rotated matrices; this is
    validated before returning.

    Raises
    ------
    SingularRotationError
        ``B_hat'B0`` or ``F_hat'F0`` singular (needed for the inverses).
    """
    T = pc.T
    lam_inv = 1.0 / pc.lambda_hat
    FstF_hat = F_star.T @ pc.F_hat / T
    F0tF_hat = F0.T @ pc.F_hat / T
    H_hat = (B_star.T @ B_star) @ FstF_hat * lam_inv[None, :]
    H_hat4 = B_star.T @ pc.B_hat * lam_inv[None, :]
    H_tilde4 = B0.T @ pc.B_hat * lam_inv[None, :]
    H_tilde = (B0.T @ B0) @ F0tF_hat * lam_inv[None, :]
    Q_hat = FstF_hat.T
    Q_tilde = F0tF_hat.T
    try:
        # (B0'B0) inv(B_hat'B0), via solve on the transposed system
        H_tilde1 = np.linalg.solve(B0.T @ pc.B_hat, B0.T @ B0).T
    except np.linalg.LinAlgError as exc:
        raise SingularRotationError("B_hat'B0 is singular") from exc
    try:
        H_tilde3 = np.linalg.solve(pc.F_hat.T @ F0, pc.F_hat.T @ pc.F_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularRotationError("F_hat'F0 is singular") from exc

    rset = RotationSet(
        H_hat=H_hat, H_hat4=H_hat4, H_tilde4=H_tilde4, Q_hat=Q_hat,
        Q_tilde=Q_tilde, H_tilde=H_tilde, H_tilde1=H_tilde1, H_tilde3=H_tilde3,
    )
    for left, right, name in (
        (F_star @ H_hat4, F0 @ H_tilde4, "F* H_hat4 = F0 H_tilde4"),
        (B_star @ Q_hat.T, B0 @ Q_tilde.T, "B* Q_hat' = B0 Q_tilde'"),
        (F_star @ H_hat, F0 @ H_tilde, "F* H_hat = F0 H_tilde"),
    ):
        scale = max(np.linalg.norm(left, "fro"), 1e-300)
        if np.linalg.norm(left - right, "fro") > 1e-10 * scale:
            raise DimensionError(
                f"{name} fails: the two parametrizations do not describe the same panel"
            )
    return rset


def align_to_reference(pc: PcFit, F_ref: np.ndarray) -> PcFit:
    """Permute and sign-flip estimated columns to match a reference.

    Columns of ``F_hat`` are matched to columns of ``F_ref`` greedily in
    descending absolute correlation; the same permutation and signs are
    applied to ``B_hat`` and to the ordering of ``lambda_hat``. Residuals
    and the common component are unchanged.

    Raises
    ------
    AmbiguousAlignmentError
        Two estimated columns tie (|corr| gap < 1e-12) for the same
        reference column at some greedy step.
    """
    F_ref = np.asarray(F_ref, dtype=float)
    if F_ref.shape != pc.F_hat.shape:
        raise DimensionError(
            f"reference shape {F_ref.shape} does not match F_hat {pc.F_hat.shape}"
        )
    r = pc.r
    C = np.corrcoef(pc.F_hat, F_ref, rowvar=False)[:r, r:]
    absC = np.abs(C)
    perm = np.empty(r, dtype=int)
    signs = np.empty(r)
    free_est = list(range(r))
    free_ref = list(range(r))
    for _ in range(r):
        sub = absC[np.ix_(free_est, free_ref)]
        flat = np.argmax(sub)
        ei, ri = np.unravel_index(flat, sub.shape)
        best = sub[ei, ri]
        ties = np.argwhere(sub >= best - 1e-12)
        same_ref = ties[ties[:, 1] == ri]
        if len(np.unique(same_ref[:, 0])) > 1:
            raise AmbiguousAlignmentError(
                f"two estimated columns match reference column {free_ref[ri] + 1} equally well"
            )
        j, k = free_est[ei], free_ref[ri]
        perm[k] = j
        signs[k] = 1.0 if C[j, k] >= 0 else -1.0
        free_est.remove(j)
        free_ref.remove(k)
    return PcFit(
        F_hat=pc.F_hat[:, perm] * signs[None, :],
        B_hat=pc.B_hat[:, perm] * signs[None, :],
        lambda_hat=pc.lambda_hat[perm],
        E_hat=pc.E_hat,
        C_hat=pc.C_hat,
        r=r,
    )
