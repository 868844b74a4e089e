"""Exception types raised across the package."""


class BranchAmbiguityError(ValueError):
    """Rotation angle too close to pi for a well-defined principal logarithm."""


class GimbalLockError(ValueError):
    """Euler-angle extraction requested too close to the gimbal singularity."""


class DivergenceError(RuntimeError):
    """A rollout produced non-finite or runaway states.

    ``step`` holds the index of the first offending state when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class IllConditionedError(RuntimeError):
    """Regularization exceeded its cap without making Q_uu positive definite."""


class ScenarioError(ValueError):
    """Malformed or invalid scenario document.

    ``field`` names the offending location, e.g. ``constraints[0].radius``.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class EmptyStatisticsError(RuntimeError):
    """Every Monte-Carlo sample diverged, leaving nothing to summarize."""
