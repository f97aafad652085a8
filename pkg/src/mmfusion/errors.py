"""Exception hierarchy shared across the package."""


class MMFusionError(Exception):
    """Base class for all package errors."""


class InputError(MMFusionError, ValueError):
    """Malformed input: wrong length, shape, dimension or value range."""


class DegenerateInputError(MMFusionError, ValueError):
    """Well-formed input on which the requested quantity is undefined."""


class TrainingError(MMFusionError, RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


class LoadError(MMFusionError):
    """A corpus or checkpoint file could not be read or failed validation."""
