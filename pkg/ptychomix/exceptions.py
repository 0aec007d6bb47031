"""Error types raised across the package."""

from typing import Optional


class PtychoError(Exception):
    """Base class for all ptychomix errors."""


class RegionError(PtychoError, IndexError):
    """A pixel region or index lies outside the array it refers to."""


class DimensionError(PtychoError, ValueError):
    """Array shapes do not agree."""


class DomainError(PtychoError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ArgumentError(PtychoError, ValueError):
    """An argument is invalid for the requested operation."""


class ConfigurationError(PtychoError, ValueError):
    """The configuration or the input files are inconsistent."""


class FormatError(PtychoError, ValueError):
    """A file does not follow the expected on-disk format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(PtychoError, ArithmeticError):
    """The optimization produced a non-finite loss."""

    def __init__(self, epoch: int, lr: float, value: float):
        super().__init__(
            f"Loss diverged at epoch {epoch} (lr={lr:.6g}, value={value})"
        )
        self.epoch = epoch
        self.lr = lr
        self.value = value
