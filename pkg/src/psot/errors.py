"""Shared exception types."""


class PsotError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PsotError):
    """Operands have incompatible dimensions."""


class ConfigError(PsotError):
    """A configuration value is out of range or internally inconsistent."""


class GradientCheckError(PsotError):
    """A finite-difference probe produced a non-finite value."""


class TrainingDivergedError(PsotError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
