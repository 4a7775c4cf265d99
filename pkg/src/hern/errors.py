"""Exception types shared across the package."""


class HernError(Exception):
    pass


class DimensionError(HernError):
    """A tensor has the wrong rank or a disallowed spatial size."""


class ParameterError(HernError):
    """An argument value is outside its allowed range."""


class ConfigError(HernError):
    """A run or model configuration failed validation."""


class CheckpointError(HernError):
    """A checkpoint file is malformed or inconsistent with its config."""


class TrainingError(HernError):
    """The training loop hit a non-recoverable numerical state."""
