"""Exception hierarchy shared by every module."""


class SelfNormError(Exception):
    """Base class for all library errors."""


class InvalidDistribution(SelfNormError, ValueError):
    """A law violates the centering, normalisation or parameter constraints."""


class DegenerateDistribution(InvalidDistribution):
    """Second moment is zero."""


class QuadratureFailure(SelfNormError, ArithmeticError):
    """Adaptive quadrature could not reach the requested tolerance."""


class MixedScale(SelfNormError, ValueError):
    """Moment sets evaluated at different tilting scales were combined."""


class DomainError(SelfNormError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class Underflow(SelfNormError, ArithmeticError):
    """Probability below the representable double range."""


class WindowViolated(SelfNormError, ValueError):
    """Tilting scale lies outside the small-b certification window."""


class HypothesisViolated(SelfNormError):
    """A theorem hypothesis failed its finite-n surrogate check."""


class ConfigError(SelfNormError, ValueError):
    """Experiment configuration could not be parsed or validated."""
