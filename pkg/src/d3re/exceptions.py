"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, shape mismatch or unknown option."""


class DomainError(ValueError):
    """Argument outside the mathematical domain (e.g. t outside [0, 1])."""


class UndefinedScoreError(ArithmeticError):
    """Conditional time score requested where the bridge variance is zero."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""


class IntegrationError(RuntimeError):
    """Adaptive integration failed; ``partial`` holds the integral so far."""

    def __init__(self, message, partial=None, t_reached=None):
        super().__init__(message)
        self.partial = partial
        self.t_reached = t_reached


class ConvergenceWarning(UserWarning):
    """Iterative solver stopped before reaching its tolerance."""
