"""Exception hierarchy shared by all modules."""


class HelmshiftError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(HelmshiftError, ValueError):
    pass


class DimensionError(HelmshiftError, ValueError):
    pass


class StateError(HelmshiftError, RuntimeError):
    pass


class SingularSmootherError(HelmshiftError, ZeroDivisionError):
    pass


class FactorizationError(HelmshiftError, RuntimeError):
    """Coarse matrix is singular; carries the offending (k, eps, h)."""

    def __init__(self, message, k=None, eps=None, h=None):
        super().__init__(message)
        self.k = k
        self.eps = eps
        self.h = h


class BreakdownError(HelmshiftError, ArithmeticError):
    pass


class DivergenceError(HelmshiftError, ArithmeticError):
    pass


class UndefinedRateError(HelmshiftError, ValueError):
    pass


class DegenerateConfigurationError(HelmshiftError, ValueError):
    pass


class EmptyDatasetError(HelmshiftError, ValueError):
    pass


class TrainingDivergedError(HelmshiftError, ArithmeticError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class NonFiniteObjectiveError(HelmshiftError, ArithmeticError):
    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class ParseError(HelmshiftError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
