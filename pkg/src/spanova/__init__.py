"""Bayesian spatial functional ANOVA with SPDE latent fields.

Subpackages cover the finite-element mesh layer, Matern/SPDE precision
assembly, the Laplace inference engine for latent Gaussian models, the
two-step spatial ANOVA pipeline, a simulation-study harness, and the wind
extrapolation and energy chain. The `spanova` console script exposes the
pipeline end to end.
"""

from . import chol, fanova, lgm, mesh, simstudy, spde, wind
from .errors import (
    AssemblyError,
    ConvergenceError,
    DesignError,
    DimensionError,
    InsufficientDataError,
    LocationError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "mesh",
    "spde",
    "chol",
    "lgm",
    "fanova",
    "simstudy",
    "wind",
    "AssemblyError",
    "ConvergenceError",
    "DesignError",
    "DimensionError",
    "InsufficientDataError",
    "LocationError",
    "NumericalError",
    "__version__",
]
