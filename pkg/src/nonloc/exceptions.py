class ConfigurationError(ValueError):
    """Invalid parameters, grid/kernel coupling, or run configuration."""


class DomainError(ValueError):
    """Evaluation requested outside the set where an operation is defined."""


class ConsistencyError(RuntimeError):
    """An internal numerical invariant was violated."""
