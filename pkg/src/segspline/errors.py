"""Exception types shared across the package."""


class SegsplineError(Exception):
    """Base class for all package-specific errors."""


class DataError(SegsplineError, ValueError):
    """Invalid input data (shapes, state codes, probabilities, parsing)."""


class OrderingError(DataError):
    """Covariate values do not respect the ordering of the state calls.

    Carries the indices of the offending samples on each side of the
    boundary so callers can report exactly which observations overlap.
    """

    def __init__(self, message, lower_indices=(), upper_indices=()):
        super().__init__(message)
        self.lower_indices = tuple(int(i) for i in lower_indices)
        self.upper_indices = tuple(int(i) for i in upper_indices)


class DesignError(SegsplineError, ValueError):
    """Design matrix unusable: rank deficient or contains a dead column."""


class SolverError(SegsplineError, RuntimeError):
    """An iterative solver failed to converge or certify its solution."""
