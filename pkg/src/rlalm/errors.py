"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Input array has the wrong length or shape."""


class ConfigurationError(ValueError):
    """Invalid parameter or configuration value."""


class NumericalError(ArithmeticError):
    """A linear subproblem could not be solved reliably."""


class MajorizationError(NumericalError):
    """A supposed majorizer fails to dominate its target."""


class ConvergenceError(RuntimeError):
    """An iterative routine stopped before reaching its tolerance.

    The last available estimate is kept on ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DivergenceError(RuntimeError):
    """A solver run blew up; the partial convergence record is attached."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class RegimeError(ValueError):
    """Requested quantity does not exist in the current dynamical regime."""
