"""Exception hierarchy shared across the toolkit.

Two broad branches matter for callers (and for CLI exit codes):
``DesignError`` covers invalid designs, configs, shapes and arguments;
``NumericalError`` covers data-dependent degeneracies discovered at run
time (rank deficiency, near-equal eigenvalues, singular rotations, ...).
"""


class WfpcError(Exception):
    """Base class for all toolkit errors."""


class DesignError(WfpcError):
    """Invalid design, configuration, or argument values."""


class DimensionError(DesignError):
    """Conformability / shape violations."""


class NumericalError(WfpcError):
    """Base class for data-dependent numerical failures."""


class DegenerateInputError(NumericalError):
    """Input matrix is rank deficient where full rank is required."""


class NearDegenerateEigenvaluesError(NumericalError):
    """Consecutive signal eigenvalues too close to separate eigenvectors."""


class RankDeficientSignalError(NumericalError):
    """Requested number of components exceeds the numerical signal rank."""


class SingularRotationError(NumericalError):
    """A cross-product needed to build a rotation matrix is singular."""


class AmbiguousAlignmentError(NumericalError):
    """Column alignment cannot be decided: two columns tie for the same target."""


class CollinearityError(NumericalError):
    """Regressor matrix is rank deficient."""


class NumericalDegeneracyError(NumericalError):
    """A variance or scale that must be positive is not."""


class ReplicationFailureError(NumericalError):
    """Too many Monte Carlo replications failed for the summary to be trusted."""
