"""Exception types shared across the package.

Validation problems (bad arguments, malformed inputs, broken designs) derive
from ValueError; numerical failures (factorization, non-convergence) derive
from ArithmeticError so callers can map them to distinct exit codes.
"""


class AssemblyError(ValueError):
    """A finite-element matrix could not be assembled (e.g. degenerate triangle)."""


class LocationError(ValueError):
    """A point falls outside the mesh hull or an indexed grid."""


class DimensionError(ValueError):
    """Array shapes or index sets do not line up."""


class DesignError(ValueError):
    """An observation design is incomplete (e.g. a missing ensemble cell)."""


class InsufficientDataError(ValueError):
    """Not enough usable data for the requested estimate."""


class NumericalError(ArithmeticError):
    """A numerical operation failed. Carries the hyperparameter point if known."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class ConvergenceError(NumericalError):
    """An iterative solver did not converge. Carries the final gradient norm."""

    def __init__(self, message, grad_norm=None, theta=None):
        super().__init__(message, theta=theta)
        self.grad_norm = grad_norm
