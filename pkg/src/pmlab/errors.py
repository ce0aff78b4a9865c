"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or type invariant."""


class ImpossibleBranchError(RuntimeError):
    """Asked to realize an outcome whose probability is numerically zero."""


class ConsistencyError(RuntimeError):
    """An internal self-check failed; indicates a bug, not bad input."""
