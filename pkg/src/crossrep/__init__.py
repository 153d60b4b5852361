"""crossrep: multi-task regression on cross-task prediction representations."""

__version__ = "0.1.0"
