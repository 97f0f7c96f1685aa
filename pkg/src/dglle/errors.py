"""Exception types shared across the package."""


class DglleError(Exception):
    """Base class for all package errors."""


class DimensionError(DglleError, ValueError):
    """Array shapes are inconsistent; the message names the offending axis."""


class ValidationError(DglleError, ValueError):
    """Input violates a value-level contract (non-finite entries, bad range, ...)."""


class ConfigError(DglleError, ValueError):
    """Configuration file or flag set is invalid; the message names the key."""


class NonFiniteError(DglleError, FloatingPointError):
    """A computation produced NaN/Inf; the message names the stage."""


class CheckpointError(DglleError, ValueError):
    """Checkpoint corrupt or incompatible with the requested config."""


class TrainingDiverged(DglleError, RuntimeError):
    """Training loss became non-finite; carries the epoch and batch index."""

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
