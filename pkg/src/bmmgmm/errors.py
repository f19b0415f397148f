"""Exception hierarchy shared by all estimators."""


class BMMError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(BMMError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""


class NonPositiveVariance(NumericalError):
    """Moments imply a variance that is zero or negative."""


class SingularScale(NumericalError):
    """A scale matrix is not positive-definite within tolerance."""


class DofTooSmall(NumericalError):
    """Degrees of freedom too small for the requested moment to exist."""


class InconsistentMoments(NumericalError):
    """Moments cannot be mapped back to a valid parameter set."""


class IllConditionedPosterior(NumericalError):
    """A streaming fit hit a step whose posterior could not be recovered."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidCombination(NumericalError):
    """Partial posteriors combine to an invalid parameter set."""


class DataError(BMMError, ValueError):
    """Input data is malformed (ragged rows, non-finite values, ...)."""
