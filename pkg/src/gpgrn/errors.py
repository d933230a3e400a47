"""Exception types shared across the package."""


class NumericalDegeneracyError(RuntimeError):
    """A covariance matrix stayed non positive definite after jitter escalation."""


class InvalidDataError(ValueError):
    """Input data violates a structural requirement (shapes, monotone times, ...)."""


class UndefinedScoreError(ValueError):
    """A classifier score is undefined (e.g. ground truth has a single class)."""
