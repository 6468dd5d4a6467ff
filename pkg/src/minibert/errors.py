"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class CorpusError(ValueError):
    """A corpus file or record is malformed; messages carry row numbers."""


class CheckpointError(RuntimeError):
    """A checkpoint is missing, corrupt, or inconsistent with its manifest."""


class TrainingError(RuntimeError):
    """Training aborted; messages carry the epoch and batch context."""
