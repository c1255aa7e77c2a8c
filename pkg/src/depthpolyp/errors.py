"""Exception types shared across the package."""


class DepthPolypError(Exception):
    """Base class for all library-specific errors."""


class DimensionError(DepthPolypError, ValueError):
    """Tensor shapes disagree; the message names the offending axis."""


class ConfigurationError(DepthPolypError, ValueError):
    """A config value violates a structural constraint (divisibility, parity, range)."""


class DataError(DepthPolypError, ValueError):
    """Input data violates its contract (non-binary mask, out-of-range pixels)."""


class UsageError(DepthPolypError, RuntimeError):
    """An API was called in an unsupported way (e.g. backward on a non-scalar)."""


class TrainingError(DepthPolypError, RuntimeError):
    """Training aborted; the message carries step diagnostics."""


class CheckpointError(DepthPolypError, RuntimeError):
    """Checkpoint file is malformed or does not match the model."""
