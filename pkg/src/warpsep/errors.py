"""Exception types raised across the package."""


class WarpsepError(Exception):
    """Base class for all package errors."""


class InvalidParameter(WarpsepError, ValueError):
    pass


class DimensionMismatch(WarpsepError, ValueError):
    pass


class OutOfRange(WarpsepError, ValueError):
    pass


class NumericFailure(WarpsepError, ArithmeticError):
    pass


class SingularMatrix(NumericFailure):
    pass


class NoConvergence(WarpsepError, RuntimeError):
    """Raised when an iterative procedure exhausts its budget.

    ``best`` carries the last iterate when one is available.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(WarpsepError, ValueError):
    """Invalid run configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
