"""Exception taxonomy shared across the library."""


class SfcalcError(Exception):
    """Base class for all library errors."""


class ValidationError(SfcalcError):
    """Structural problem with an input: broken invariant, model mismatch."""


class DomainError(SfcalcError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(SfcalcError):
    """A documented precondition of an operation does not hold."""


class ModelError(SfcalcError):
    """Operation not supported on the given operator model."""


class NumericError(SfcalcError):
    """Numerical procedure failed to converge or produced an ambiguous result.

    ``partial`` carries whatever partial estimate was available when the
    failure was detected.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
