"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class RankDeficiencyError(RuntimeError):
    """Raised when a least-squares subproblem has a rank-deficient matrix."""

    def __init__(self, message, support=None):
        super().__init__(message)
        self.support = support
