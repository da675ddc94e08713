"""Exception hierarchy shared across the package."""


class ReclinkError(Exception):
    """Base class for all errors raised by reclink."""


class DataError(ReclinkError):
    """Bad input data, configuration, or arguments (a user-fixable problem)."""


class ProviderError(ReclinkError):
    """A remote embeddings provider failed or returned a malformed response."""


class TrainingError(ReclinkError):
    """Training diverged or was configured inconsistently."""
