"""Exception types shared across the package."""


class PcovError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PcovError, ValueError):
    """Invalid argument values or inconsistent configuration."""


class DimensionMismatchError(ValidationError):
    """Operands whose shapes cannot be combined."""


class DegenerateVarianceError(PcovError, ArithmeticError):
    """A (long-run) variance estimate fell at or below the variance floor.

    Raised instead of silently regularizing: a vanishing variance means the
    standardized statistics are not well defined for the offending
    hypothesis/pair, which usually indicates constant or duplicated data.
    """


class MatrixLoadError(PcovError, ValueError):
    """A data file could not be parsed into an observation matrix."""
