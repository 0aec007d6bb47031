"""Angular-spectrum free-space propagation between object and camera plane."""

import logging
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import fft as sp_fft

from ptychomix.exceptions import DimensionError
from ptychomix.field import ComplexField

logger = logging.getLogger(__name__)


class PropagatorSpec(BaseModel):
    """Geometry of a propagation step. Negative distance back-propagates."""
    model_config = ConfigDict(frozen=True)

    wavelength_m: float = 561e-9
    distance_m: float = 37.7e-3
    height: int
    width: int
    pitch_m: float = 6.9e-6

    @field_validator('wavelength_m', 'pitch_m')
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError('must be > 0')
        return v

    @field_validator('height', 'width')
    @classmethod
    def validate_size(cls, v):
        if v < 1:
            raise ValueError('must be >= 1 pixel')
        return v

    @property
    def shape(self):
        return (self.height, self.width)


class Propagator:
    """Immutable transfer-function operator for one PropagatorSpec."""

    def __init__(self, spec: PropagatorSpec, transfer: np.ndarray):
        self.spec = spec
        transfer = np.array(transfer, dtype=np.complex128)
        transfer.setflags(write=False)
        self._transfer = transfer
        self._transfer_conj = np.conj(transfer)
        self._transfer_conj.setflags(write=False)

    @property
    def transfer_function(self) -> np.ndarray:
        return self._transfer

    @property
    def shape(self):
        return self.spec.shape

    def _check(self, data: np.ndarray):
        if data.shape != self.spec.shape:
            raise DimensionError(
                f"Field shape {data.shape} does not match propagator shape {self.spec.shape}"
            )

    def forward(self, data: np.ndarray) -> np.ndarray:
        """Propagate a raw complex array."""
        self._check(data)
        return sp_fft.ifft2(self._transfer * sp_fft.fft2(data, norm="ortho"), norm="ortho")

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        """Apply the adjoint (conjugate transfer function) to a raw array."""
        self._check(data)
        return sp_fft.ifft2(self._transfer_conj * sp_fft.fft2(data, norm="ortho"), norm="ortho")


def transfer_function(spec: PropagatorSpec) -> np.ndarray:
    """H(fx, fy) on the DFT grid; evanescent samples are exactly zero."""
    fy = sp_fft.fftfreq(spec.height, d=spec.pitch_m)
    fx = sp_fft.fftfreq(spec.width, d=spec.pitch_m)
    arg = 1.0 / spec.wavelength_m ** 2 - fy[:, None] ** 2 - fx[None, :] ** 2
    propagating = arg >= 0
    kz = np.sqrt(np.where(propagating, arg, 0.0))
    return np.where(propagating, np.exp(2j * np.pi * spec.distance_m * kz), 0.0)


@lru_cache(maxsize=32)
def build_propagator(spec: PropagatorSpec) -> Propagator:
    """Build (or fetch the cached) propagator for `spec`."""
    transfer = transfer_function(spec)
    evanescent = int(np.count_nonzero(transfer == 0))
    logger.debug(
        f"Built propagator {spec.height}x{spec.width}, d={spec.distance_m} m, "
        f"{evanescent} evanescent samples"
    )
    return Propagator(spec, transfer)


def propagate(p: Propagator, field: ComplexField) -> ComplexField:
    """ifft2(H * fft2(field)), same shape and pitch."""
    return field.with_data(p.forward(field.data))


def propagate_adjoint(p: Propagator, field: ComplexField) -> ComplexField:
    """ifft2(conj(H) * fft2(field)); the adjoint of propagate."""
    return field.with_data(p.adjoint(field.data))
