"""Numerical experiments on distance sets in elliptical norms.

Modules: :mod:`~ellipdist.convex_bodies` (norms, support functions, duals),
:mod:`~ellipdist.measures` (atomic fractal measures and point sets),
:mod:`~ellipdist.fourier` (transforms and decay fits),
:mod:`~ellipdist.mattila` (circular averages and Mattila integrals),
:mod:`~ellipdist.distance_sets` (counting, covering, experiments) and
:mod:`~ellipdist.cli` (batch runner).
"""
__version__ = "0.1.0"

from .convex_bodies import ConvexBody, Ellipse, LinearTransform, ellipse_samples
from .errors import BudgetExceededError, ConvergenceError, DegenerateBodyError, ExactModeError, ResolutionError
from .measures import DiscreteMeasure, FalconerConstruction, PointSet

__all__ = [
    "BudgetExceededError", "ConvergenceError", "ConvexBody", "DegenerateBodyError", "DiscreteMeasure",
    "Ellipse", "ExactModeError", "FalconerConstruction", "LinearTransform", "PointSet", "ResolutionError",
    "ellipse_samples",
]
