"""
Exception hierarchy for vidaug.

ValidationError and ConfigurationError are ValueErrors so callers that only
know the standard library can still catch them; container problems are
OSErrors because they surface while reading files.
"""


class VidaugError(Exception):
    """Base class for every error raised by vidaug."""


class ValidationError(VidaugError, ValueError):
    """Data, shape or range check failed."""


class ConfigurationError(VidaugError, ValueError):
    """A policy, pool or training configuration is unusable."""


class ClipFormatError(VidaugError, OSError):
    """A `.vclip` container has a bad magic, version or header."""


class ClipTruncatedError(ClipFormatError):
    """A `.vclip` payload is shorter than its header declares."""


class NumericError(VidaugError, ArithmeticError):
    """Parameters or losses became non-finite."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, step: int) -> None:
        super().__init__(f"{message} (epoch {epoch}, step {step})")
        self.epoch = epoch
        self.step = step
