"""Exception hierarchy shared by the estimation modules and the CLI."""


class NpivError(Exception):
    """Base class for all package errors."""


class ValidationError(NpivError, ValueError):
    """Bad input or configuration. Maps to CLI exit code 1."""


class NumericalError(NpivError, ArithmeticError):
    """A computation failed numerically. Maps to CLI exit code 2."""


class InvalidSpecError(ValidationError):
    pass


class DegenerateSampleError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class MissingCategoryError(ValidationError):
    pass


class UnsupportedInstrumentError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class InsufficientStratumError(ValidationError):
    pass


class NonIdentifiedError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class SchemaError(ValidationError):
    """Input file does not match the expected columns or cell types."""
