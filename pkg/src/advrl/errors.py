"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration: bad dimensions, unknown ids, malformed specs."""


class UsageError(RuntimeError):
    """API misuse: operations invoked outside their valid protocol."""


class NonConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration cap without converging."""


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss; carries a diagnostic snapshot."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class CertificationError(AssertionError):
    """A certified mathematical property failed on a concrete instance."""
