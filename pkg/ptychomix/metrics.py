"""Reconstruction quality metrics and photon accounting."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ptychomix.exceptions import ArgumentError, DimensionError, DomainError
from ptychomix.field import ComplexField, Pixel, RealField, check_region

ArrayOrField = Union[np.ndarray, ComplexField, RealField]


@dataclass(frozen=True, eq=False)
class EvalRegion:
    """Optional boolean mask restricting evaluation to well-illuminated pixels."""
    mask: Optional[np.ndarray] = None

    def select(self, data: np.ndarray) -> np.ndarray:
        if self.mask is None:
            return data.ravel()
        if self.mask.shape != data.shape:
            raise DimensionError(f"Region mask {self.mask.shape} does not match field {data.shape}")
        return data[self.mask]


FULL_FRAME = EvalRegion()


def _values(x: ArrayOrField) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, (ComplexField, RealField)) else x)


def footprint_region(object_shape, probe: ArrayOrField, offsets: Sequence[Pixel],
                     threshold: float = 0.1) -> EvalRegion:
    """Pixels where |P|^2 exceeds `threshold` of its peak for at least one position.

    The default keeps the well-lit interior of each window and drops the dim
    rim of a soft probe.
    """
    intensity = np.abs(_values(probe)) ** 2
    peak = intensity.max()
    if peak == 0:
        raise DomainError("Probe is identically zero; no illuminated region")
    lit = intensity > threshold * peak
    mask = np.zeros(object_shape, dtype=bool)
    for r, c in offsets:
        check_region(object_shape, (r, c), lit.shape)
        mask[r:r + lit.shape[0], c:c + lit.shape[1]] |= lit
    return EvalRegion(mask)


def correlation(O_gt: ArrayOrField, O: ArrayOrField, region: EvalRegion = FULL_FRAME) -> float:
    """|<O_gt, O>| / (||O_gt|| ||O||) over the region; global phase and scale invariant."""
    a = _values(O_gt)
    b = _values(O)
    if a.shape != b.shape:
        raise DimensionError(f"Shape mismatch: {a.shape} vs {b.shape}")
    a = region.select(a)
    b = region.select(b)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise DomainError("Correlation is undefined for a field that is zero on the region")
    c = abs(np.vdot(a, b)) / (norm_a * norm_b)
    return float(min(c, 1.0))


def align_global_phase(field: ComplexField, reference: ComplexField) -> ComplexField:
    """Rotate `field` by the global phase that best matches `reference`."""
    overlap = np.vdot(field.data, reference.data)
    if overlap == 0:
        return field
    return field.with_data(field.data * (overlap / abs(overlap)))


def photon_budget(probe: ArrayOrField) -> float:
    """Expected photon count per exposure, sum |P|^2."""
    return float(np.sum(np.abs(_values(probe)) ** 2))


def rescale_to_budget(probe: ComplexField, budget: float) -> ComplexField:
    """Scale the probe amplitude so that photon_budget(probe) == budget."""
    if not budget > 0:
        raise ArgumentError(f"Photon budget must be > 0, got {budget}")
    current = photon_budget(probe)
    if current == 0:
        raise DomainError("Cannot rescale a zero probe")
    return probe.with_data(probe.data * math.sqrt(budget / current))


def frame_snr(intensity: ArrayOrField, variance: ArrayOrField) -> float:
    """Mean signal over the mixed-noise standard deviation sqrt(mean(I) + mean(sigma^2))."""
    signal = float(np.mean(_values(intensity)))
    noise = math.sqrt(max(signal, 0.0) + float(np.mean(_values(variance))))
    return signal / noise if noise > 0 else math.inf
