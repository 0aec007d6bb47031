"""Complex and real field containers and elementary array operations.

Fields are dense, double precision, row-major 2-D arrays with a uniform
square pixel pitch in meters. Field values are immutable: every operation
returns a new field.
"""

from dataclasses import dataclass
from typing import ClassVar, Tuple, TypeVar

import numpy as np
from scipy import fft as sp_fft

from ptychomix.exceptions import DimensionError, DomainError, RegionError

Pixel = Tuple[int, int]
Shape = Tuple[int, int]

F = TypeVar("F", bound="_Field")


def _frozen_array(data, dtype) -> np.ndarray:
    arr = np.array(data, dtype=dtype, copy=True)
    if arr.ndim != 2:
        raise DimensionError(f"Field data must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"Field must be at least 1x1, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class _Field:
    data: np.ndarray
    pitch: float

    dtype: ClassVar[type] = np.float64

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, self.dtype))
        if not float(self.pitch) > 0:
            raise DomainError(f"Pixel pitch must be > 0, got {self.pitch}")
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @classmethod
    def zeros(cls: type[F], shape: Shape, pitch: float) -> F:
        return cls(np.zeros(shape, dtype=cls.dtype), pitch)

    @classmethod
    def ones(cls: type[F], shape: Shape, pitch: float) -> F:
        return cls(np.ones(shape, dtype=cls.dtype), pitch)

    def with_data(self: F, data) -> F:
        """Return a field of the same kind and pitch holding `data`."""
        return type(self)(data, self.pitch)


class ComplexField(_Field):
    """2-D complex field amplitude (object, probe, exit or propagated wave)."""

    dtype: ClassVar[type] = np.complex128


class RealField(_Field):
    """2-D real map (intensity frame, measurement, variance map)."""

    dtype: ClassVar[type] = np.float64


def check_region(field_shape: Shape, top_left: Pixel, shape: Shape) -> None:
    """Raise RegionError unless the region lies fully inside `field_shape`."""
    for axis, name in ((0, "row"), (1, "column")):
        start = int(top_left[axis])
        stop = start + int(shape[axis])
        if shape[axis] < 1:
            raise RegionError(f"Region {name} extent must be >= 1, got {shape[axis]}")
        if start < 0 or stop > field_shape[axis]:
            raise RegionError(
                f"Region {name} {start}..{stop} outside field {name}s 0..{field_shape[axis]}"
            )


def extract_region(field: F, top_left: Pixel, shape: Shape) -> F:
    """Copy the `shape` sub-region starting at `top_left` (row, column)."""
    check_region(field.shape, top_left, shape)
    r, c = int(top_left[0]), int(top_left[1])
    return field.with_data(field.data[r:r + shape[0], c:c + shape[1]])


def accumulate_region(target: ComplexField, top_left: Pixel, patch: ComplexField) -> ComplexField:
    """Add `patch` into `target` at `top_left`; the adjoint of extract_region."""
    check_region(target.shape, top_left, patch.shape)
    r, c = int(top_left[0]), int(top_left[1])
    out = np.array(target.data)
    out[r:r + patch.height, c:c + patch.width] += patch.data
    return target.with_data(out)


def fft2(field: ComplexField) -> ComplexField:
    """Unitary 2-D DFT (1/sqrt(HW) scaling)."""
    return ComplexField(sp_fft.fft2(field.data, norm="ortho"), field.pitch)


def ifft2(field: ComplexField) -> ComplexField:
    """Unitary inverse 2-D DFT."""
    return ComplexField(sp_fft.ifft2(field.data, norm="ortho"), field.pitch)


def inner(a: _Field, b: _Field) -> complex:
    """Inner product sum(conj(a) * b)."""
    if a.shape != b.shape:
        raise DimensionError(f"Shape mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a.data, b.data))


def centered_disc(height: int, width: int, pitch: float, radius: float) -> np.ndarray:
    """Boolean mask of the disc of `radius` meters around the array center."""
    y = (np.arange(height) - (height - 1) / 2.0) * pitch
    x = (np.arange(width) - (width - 1) / 2.0) * pitch
    return (y[:, None] ** 2 + x[None, :] ** 2) <= radius ** 2
