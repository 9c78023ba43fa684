"""Exception hierarchy shared across the package."""


class ToonflowError(Exception):
    """Base class for all package errors."""


class DimensionError(ToonflowError):
    """Array shapes are incompatible for the requested operation."""


class ContractError(ToonflowError):
    """A documented precondition or invariant was violated by the caller."""


class ConfigError(ToonflowError):
    """A configuration value is missing, malformed, or inconsistent."""


class NumericsError(ToonflowError):
    """Non-finite values or other numeric failures during computation."""


class TrainingError(ToonflowError):
    """Training diverged or otherwise failed; message carries step diagnostics."""


class CheckpointError(ToonflowError):
    """Checkpoint file missing, corrupt, or incompatible with the model."""
