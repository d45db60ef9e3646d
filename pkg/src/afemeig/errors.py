"""Exception hierarchy shared across the package."""


class AfemError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AfemError):
    """Bad user input: unknown problem name, invalid parameter, bad file."""


class LineageError(AfemError):
    """A mesh pair that should be parent/child via refinement is not."""


class AssemblyError(AfemError):
    """Mesh unusable for assembly (degenerate element, missing region)."""


class NumericalError(AfemError):
    """Linear algebra breakdown: non-SPD matrix, failed factorization."""


class ShiftValidityError(NumericalError):
    """A shifted local operator lost positivity; the coarse mesh is too
    coarse for the current eigenvalue shift."""


class CoarseSetupError(AfemError):
    """The once-refined coarse eigenvalue did not drop below the coarse
    one; a finer initial mesh is required."""


class ConvergenceError(AfemError):
    """Outer iteration hit its cap without meeting the stop tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
