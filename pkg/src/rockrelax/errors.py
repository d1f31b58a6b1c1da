"""Exception types shared across the package."""


class RockrelaxError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RockrelaxError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(RockrelaxError, ValueError):
    """A file does not conform to its declared on-disk format."""


class SchemaError(RockrelaxError, ValueError):
    """A configuration document fails schema validation."""


class NumericError(RockrelaxError, ArithmeticError):
    """A numeric computation produced non-finite values."""


class UnsupportedScaleError(RockrelaxError, ValueError):
    """A verification-only routine was called beyond its supported size."""
