"""Exception hierarchy shared by every arrivalcast module."""


class ArrivalcastError(RuntimeError):
    """Root of all errors raised on purpose by arrivalcast."""

    pass


class ValidationError(ArrivalcastError, ValueError):
    """Input data or a precondition was rejected."""

    pass


class NumericalError(ArrivalcastError):
    """A numerical routine produced no usable result."""

    pass
