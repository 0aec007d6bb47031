"""Mixed Poisson-Gaussian camera simulation and dark-frame calibration.

Simulation works in photoelectron counts. The ADU layer (gain) only comes into
play when external camera frames are ingested: counts = ADU * gain_inv.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from ptychomix.exceptions import ArgumentError, DimensionError, DomainError
from ptychomix.field import RealField

logger = logging.getLogger(__name__)

ArrayOrField = Union[np.ndarray, RealField]

LIGHT_STREAM = 0
DARK_STREAM = 1


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Readout noise (per-pixel or scalar sigma), gain and black level."""
    sigma: Union[float, np.ndarray] = 1.5
    gain_inv: float = 1.0
    black_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64)
        if sigma.ndim not in (0, 2):
            raise DimensionError(f"sigma must be a scalar or 2-D map, got shape {sigma.shape}")
        if np.any(sigma < 0):
            raise ArgumentError("sigma must be >= 0 at every pixel")
        if not self.gain_inv > 0:
            raise ArgumentError(f"gain_inv must be > 0, got {self.gain_inv}")
        if self.black_level < 0:
            raise ArgumentError(f"black_level must be >= 0, got {self.black_level}")
        variance = sigma ** 2
        variance.setflags(write=False)
        object.__setattr__(self, "_variance", variance)

    def variance_map(self, shape) -> np.ndarray:
        """Per-pixel readout variance sigma_k^2 for a frame of `shape`."""
        try:
            return np.array(np.broadcast_to(self._variance, shape), dtype=np.float64)
        except ValueError:
            raise DimensionError(
                f"sigma map shape {self._variance.shape} does not match frame shape {tuple(shape)}"
            )

    def sigma_map(self, shape) -> np.ndarray:
        return np.sqrt(self.variance_map(shape))


class NoiseConfig(BaseModel):
    """Camera settings as they appear in the [noise] config section."""
    model_config = ConfigDict(frozen=True)

    sigma_counts: float = 1.5
    gain_inv_e_per_adu: float = 2.7
    black_level_counts: float = 0.0
    dark_frames: int = 300

    @field_validator('sigma_counts', 'black_level_counts')
    @classmethod
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValueError('must be >= 0')
        return v

    @field_validator('gain_inv_e_per_adu')
    @classmethod
    def validate_gain(cls, v):
        if not v > 0:
            raise ValueError('gain_inv_e_per_adu must be > 0')
        return v

    @field_validator('dark_frames')
    @classmethod
    def validate_dark_frames(cls, v):
        if v != 0 and v < 2:
            raise ValueError('dark_frames must be 0 (exact variance) or >= 2')
        return v

    def to_model(self, seed: int) -> NoiseModel:
        # Simulated frames are already in counts, so the gain stays at 1.
        return NoiseModel(sigma=self.sigma_counts, gain_inv=1.0,
                          black_level=self.black_level_counts, seed=seed)


class DarkCalibration(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray


def frame_rng(seed: int, index: int, stream: int = LIGHT_STREAM) -> np.random.Generator:
    """Independent, reproducible generator for one frame."""
    return np.random.default_rng([int(seed), int(stream), int(index)])


def _values(x: ArrayOrField) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, RealField) else x, dtype=np.float64)


def _like(template: ArrayOrField, data: np.ndarray) -> ArrayOrField:
    return template.with_data(data) if isinstance(template, RealField) else data


def sample_frame(I: ArrayOrField, m: NoiseModel, rng: Optional[np.random.Generator] = None,
                 index: int = 0) -> ArrayOrField:
    """Poisson(I) + Normal(0, sigma^2) + black_level, in counts."""
    intensity = _values(I)
    if np.any(intensity < 0) or not np.all(np.isfinite(intensity)):
        raise DomainError("Intensity must be finite and non-negative")
    if rng is None:
        rng = frame_rng(m.seed, index)
    shot = rng.poisson(intensity).astype(np.float64)
    readout = rng.standard_normal(intensity.shape) * m.sigma_map(intensity.shape)
    return _like(I, shot + readout + m.black_level)


def sample_dark_stack(m: NoiseModel, shape, count: int) -> np.ndarray:
    """`count` dark frames, stacked along axis 0."""
    if count < 1:
        raise ArgumentError(f"Dark stack needs at least one frame, got {count}")
    shape = tuple(shape)
    sigma = m.sigma_map(shape)
    stack = np.empty((count,) + shape, dtype=np.float64)
    for k in range(count):
        rng = frame_rng(m.seed, k, DARK_STREAM)
        stack[k] = rng.standard_normal(shape) * sigma + m.black_level
    return stack


def preprocess(raw: ArrayOrField, dark_mean: ArrayOrField, gain_inv: float = 1.0) -> ArrayOrField:
    """Background-subtract and convert to photoelectron counts; keeps negatives."""
    data = _values(raw)
    dark = _values(dark_mean)
    if data.shape[-2:] != dark.shape[-2:] or dark.ndim > 2:
        raise DimensionError(f"Frame shape {data.shape} does not match dark frame {dark.shape}")
    return _like(raw, (data - dark) * gain_inv)


def adu_to_counts(raw_adu: ArrayOrField, gain_inv: float) -> ArrayOrField:
    """Rescale camera ADU by the inverse system gain (electrons per ADU)."""
    return _like(raw_adu, _values(raw_adu) * gain_inv)


def _stack(dark_stack: Union[np.ndarray, Sequence[ArrayOrField]]) -> np.ndarray:
    if isinstance(dark_stack, np.ndarray):
        stack = np.asarray(dark_stack, dtype=np.float64)
    else:
        stack = np.stack([_values(f) for f in dark_stack])
    if stack.ndim != 3:
        raise DimensionError(f"Dark stack must be (count, height, width), got {stack.shape}")
    return stack


def estimate_variance_map(dark_stack, gain_inv: float = 1.0) -> np.ndarray:
    """Unbiased per-pixel variance of a dark stack, in counts^2."""
    stack = _stack(dark_stack)
    if stack.shape[0] < 2:
        raise ArgumentError(f"Variance estimate needs at least 2 dark frames, got {stack.shape[0]}")
    return np.var(stack, axis=0, ddof=1) * gain_inv ** 2


def calibrate_dark(dark_stack, gain_inv: float = 1.0) -> DarkCalibration:
    """Mean dark frame (raw units, for background subtraction) and variance map (counts^2)."""
    stack = _stack(dark_stack)
    variance = estimate_variance_map(stack, gain_inv)
    logger.info(
        f"Dark calibration from {stack.shape[0]} frames: "
        f"mean level {stack.mean():.3f}, mean variance {variance.mean():.4f}"
    )
    return DarkCalibration(stack.mean(axis=0), variance)


def minimal_black_level(dark_stack_without_offset) -> int:
    """Smallest integer offset that lifts every dark reading strictly above zero."""
    stack = _stack(dark_stack_without_offset)
    return max(0, int(math.floor(-float(stack.min()))) + 1)
