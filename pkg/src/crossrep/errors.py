"""Exception hierarchy shared across the package."""


class CrossrepError(Exception):
    """Base class for all errors raised by crossrep."""


class IngestionError(CrossrepError):
    """Raised when a task file or manifest cannot be parsed or validated."""


class ValidationError(CrossrepError):
    """Raised when an in-memory object violates a structural invariant."""


class FitError(CrossrepError):
    """Raised when a learner cannot be fit on the given data."""


class ConvergenceError(FitError):
    """Raised when an iterative solver exhausts its iteration cap."""


class ConfigError(CrossrepError):
    """Raised for invalid experiment configuration."""
