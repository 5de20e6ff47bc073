"""Weak-factor principal components toolkit.

Estimation and inference for approximate factor models whose signal
eigenvalues may diverge at different rates, organized around the
identified ("pseudo-true") parametrization that the PC estimator targets:

- :mod:`wfpc.dgp` — synthetic weak-factor panels and regression targets
- :mod:`wfpc.rotation` — the structural-to-identified rotation and the
  estimator-dependent rotation diagnostics
- :mod:`wfpc.pc` — the principal-component estimator
- :mod:`wfpc.inference` — plug-in covariances, z and chi-square statistics
- :mod:`wfpc.augreg` — factor-augmented regression and forecasting
- :mod:`wfpc.montecarlo` — replication engine for the simulation designs
- :mod:`wfpc.cli` — command-line interface
"""

from .augreg import AugRegFit, Forecast, augreg_fit, forecast, gamma_joint_q2, infeasible_gamma
from .dgp import (
    AugRegData,
    AugRegDesign,
    FactorDesign,
    LoadingMode,
    Panel,
    assemble_panel,
    gen_augreg,
    gen_factors,
    gen_loadings,
    gram_schmidt_scale,
)
from .inference import (
    FactorCov,
    LoadingCov,
    chi2_quantile,
    gamma_hat,
    normal_quantile,
    phi_hat,
    q2_joint,
    z_common,
    z_factor,
    z_loading,
)
from .montecarlo import (
    Experiment,
    McConfig,
    McSummary,
    run_augreg_mc,
    run_element_tests_mc,
    run_factor_mc,
    run_joint_normality_mc,
)
from .pc import PcFit, objective_value, pc_fit
from .rotation import PseudoTrueRotation, RotationSet, align_to_reference, data_rotations, pseudo_true_rotation

__version__ = "0.1.0"

__all__ = [
    "AugRegData",
    "AugRegDesign",
    "AugRegFit",
    "Experiment",
    "FactorCov",
    "FactorDesign",
    "Forecast",
    "LoadingCov",
    "LoadingMode",
    "McConfig",
    "McSummary",
    "Panel",
    "PcFit",
    "PseudoTrueRotation",
    "RotationSet",
    "align_to_reference",
    "assemble_panel",
    "augreg_fit",
    "chi2_quantile",
    "data_rotations",
    "forecast",
    "gamma_hat",
    "gamma_joint_q2",
    "gen_augreg",
    "gen_factors",
    "gen_loadings",
    "gram_schmidt_scale",
    "infeasible_gamma",
    "normal_quantile",
    "objective_value",
    "pc_fit",
    "phi_hat",
    "pseudo_true_rotation",
    "q2_joint",
    "run_augreg_mc",
    "run_element_tests_mc",
    "run_factor_mc",
    "run_joint_normality_mc",
    "z_common",
    "z_factor",
    "z_loading",
]
