"""Exception types shared across the package."""


class ResolutionError(ValueError):
    """A request falls outside the scale at which a discrete object is faithful."""


class BudgetExceededError(RuntimeError):
    """A pair or atom count exceeds the configured work budget."""


class DegenerateBodyError(ValueError):
    """A convex body fails convexity, symmetry or curvature checks."""


class ConvergenceError(RuntimeError):
    """Node doubling changed a quadrature result by more than the tolerance."""


class ExactModeError(ValueError):
    """Exact rational arithmetic was requested for irrational inputs."""
