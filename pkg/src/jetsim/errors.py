"""Exception types shared across the package."""


class JetsimError(Exception):
    """Base class for package-specific errors."""


class OutOfDomainError(JetsimError, ValueError):
    """Evaluation time falls outside the usable data window."""


class InsufficientDataError(JetsimError, ValueError):
    """Too few samples for the requested stencil or operation."""


class InconsistentInitialConditionsError(JetsimError, RuntimeError):
    """Requested initial values cannot be matched by any combination of the data."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RankDeficiencyError(JetsimError, RuntimeError):
    """Coefficient matrix lost full row rank during an explicit-mode solve."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StageFailureError(JetsimError, RuntimeError):
    """A stagewise least-squares solve left a residual above tolerance."""

    def __init__(self, message, time=None, residual=None):
        super().__init__(message)
        self.time = time
        self.residual = residual
