"""Exception types shared across the package."""


class DataError(ValueError):
    """Input data is structurally valid but numerically unusable (NaN/Inf coordinates, ...)."""


class EigensolverError(RuntimeError):
    """Dense symmetric eigensolver failed to converge.

    Carries the seed of the offending realization so the failure can be
    reproduced in isolation.
    """

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed


class FitError(RuntimeError):
    """A nonlinear fit failed to converge or was handed degenerate data."""


class EmptyRangeError(ValueError):
    """A requested cutoff/window contains no samples."""
