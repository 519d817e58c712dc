"""Exception hierarchy shared by the solver, the certifier and the CLI."""

from typing import Optional


class LeastGradientError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(LeastGradientError, ValueError):
    """Non-finite or out-of-range input to a pointwise evaluator."""


class DomainError(LeastGradientError, ValueError):
    """The rasterized domain is empty or not 4-connected."""


class DimensionMismatchError(LeastGradientError, ValueError):
    """A field does not match the grid it is used with."""


class MalformedFileError(LeastGradientError, ValueError):
    """A field or config file could not be parsed."""


class ConfigError(LeastGradientError, ValueError):
    """Invalid configuration value, step size or solver setup."""


class NumericalFailure(LeastGradientError, ArithmeticError):
    """A NaN or infinity appeared during the iteration."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class ScenarioLookupError(LeastGradientError, LookupError):
    """Unknown scenario name."""


class PreconditionError(LeastGradientError, ValueError):
    """A documented precondition of an operation does not hold."""


class UnsupportedError(LeastGradientError, NotImplementedError):
    """The requested closed form or feature is not available."""


class UnsupportedAnisotropyError(UnsupportedError):
    """The operation is only meaningful for the isotropic integrand."""
