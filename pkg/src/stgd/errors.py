"""Exception hierarchy shared by every module in the package."""


class STGDError(Exception):
    """Base class for all package errors."""


class ShapeError(STGDError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(STGDError, ValueError):
    """A structural parameter (kernel size, ratio, K, ...) is invalid."""


class ValidationError(STGDError, ValueError):
    """An input value violates its contract (non-normalized distribution, inverted interval, ...)."""


class DegenerateInputError(ValidationError):
    """Input makes the quantity undefined, e.g. a zero-norm reference vector."""


class NumericError(STGDError, ArithmeticError):
    """A non-finite value was produced."""

    def __init__(self, message, op=None):
        super().__init__(message)
        self.op = op


class CheckpointError(STGDError, IOError):
    """A checkpoint cannot be read or does not match the model."""
