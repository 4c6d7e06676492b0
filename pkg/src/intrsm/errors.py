"""Exception and warning types shared across the package."""


class IntrsmError(Exception):
    """Base class for all package errors."""


class DomainError(IntrsmError, ValueError):
    pass


class RangeError(IntrsmError, ValueError):
    pass


class NoBracketError(IntrsmError):
    pass


class ConvergenceError(IntrsmError):
    pass


class QuadratureError(ConvergenceError):
    pass


class GridError(IntrsmError):
    pass


class NotEventuallyMonotone(IntrsmError):
    pass


class HypothesisError(IntrsmError):
    pass


class DimensionError(IntrsmError, ValueError):
    pass


class RegimeError(IntrsmError):
    pass


class NoMatchError(IntrsmError, KeyError):
    pass


class NonIntegrable(IntrsmError):
    pass


class RejectionStall(IntrsmError):
    pass


class InsufficientSamples(IntrsmError):
    pass


class ConfigError(IntrsmError, ValueError):
    pass


class DiscretizationWarning(UserWarning):
    pass
