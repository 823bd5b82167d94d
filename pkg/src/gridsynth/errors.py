"""Shared exception types mapped to CLI exit codes."""


class UsageError(Exception):
    """Bad flags, malformed config, unknown config keys. Exit code 1."""


class DataError(Exception):
    """Malformed or insufficient input data. Exit code 2."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite during training. Exit code 3."""

    def __init__(self, message, step=None, losses=None):
        super().__init__(message)
        self.step = step
        self.losses = losses or {}
