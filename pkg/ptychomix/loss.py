"""Maximum-likelihood data-fidelity losses and reconstruction regularizers.

Fidelity losses compare a measured frame X with a predicted intensity I and
return the loss value together with dL/dI. Regularizer gradients are returned
packed as dL/dRe + i dL/dIm of their complex argument, which is twice the
Wirtinger gradient produced by the forward model.
"""

import math
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import fft as sp_fft

from ptychomix.exceptions import DomainError, DimensionError
from ptychomix.field import ComplexField, RealField, centered_disc

ArrayOrField = Union[np.ndarray, RealField, ComplexField]

DOMINANCE_THRESHOLD = 100.0


class LossVariant(str, Enum):
    POISSON = "poisson"
    GAUSSIAN = "gaussian"
    MIXED = "mixed"


class LossKind(BaseModel):
    """Which fidelity loss to use and how measurements are conditioned."""
    model_config = ConfigDict(frozen=True)

    variant: LossVariant = LossVariant.POISSON
    zero_crop: bool = False
    epsilon: float = 1e-12

    @field_validator('epsilon')
    @classmethod
    def validate_epsilon(cls, v):
        if not v > 0:
            raise ValueError('epsilon must be > 0')
        return v

    @property
    def crops_measurement(self) -> bool:
        # The Poisson loss needs sqrt(X), so it always sees cropped data.
        return self.variant == LossVariant.POISSON or self.zero_crop


class RegularizerWeights(BaseModel):
    """Weights of the probe-support, object-amplitude and object-Fourier L1 terms."""
    model_config = ConfigDict(frozen=True)

    alpha: float = 100.0
    beta: float = 1e-4
    gamma: float = 1e-3
    # twice the desk probe radius; the lab setup uses 1.5e-3
    support_radius_m: float = 1.6e-4
    l1_epsilon: float = 1e-8

    @field_validator('alpha', 'beta', 'gamma')
    @classmethod
    def validate_weight(cls, v):
        if v < 0:
            raise ValueError('regularizer weights must be >= 0')
        return v

    @field_validator('support_radius_m', 'l1_epsilon')
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError('must be > 0')
        return v


class LossResult(NamedTuple):
    value: float
    grad: np.ndarray


class RegResult(NamedTuple):
    value: float
    grad: np.ndarray


def _values(x: ArrayOrField, dtype=np.float64) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, (RealField, ComplexField)) else x, dtype=dtype)


def _check_pair(X: np.ndarray, I: np.ndarray):
    if X.shape != I.shape:
        raise DimensionError(f"Measurement shape {X.shape} does not match prediction {I.shape}")
    if np.any(I < 0):
        raise DomainError("Predicted intensity must be non-negative")


def crop_measurement(X: ArrayOrField) -> np.ndarray:
    """Force negative measured values to zero."""
    return np.maximum(_values(X), 0.0)


def loss_poisson(X: ArrayOrField, I: ArrayOrField, epsilon: float = 1e-12) -> LossResult:
    """sum (sqrt(X) - sqrt(I))^2 on zero-cropped X."""
    X = crop_measurement(X)
    I = _values(I)
    _check_pair(X, I)
    sqrt_x = np.sqrt(X)
    value = float(np.sum((sqrt_x - np.sqrt(I)) ** 2))
    grad = 1.0 - sqrt_x / np.sqrt(np.maximum(I, epsilon))
    return LossResult(value, grad)


def loss_gaussian(X: ArrayOrField, I: ArrayOrField) -> LossResult:
    """sum (X - I)^2."""
    X = _values(X)
    I = _values(I)
    if X.shape != I.shape:
        raise DimensionError(f"Measurement shape {X.shape} does not match prediction {I.shape}")
    residual = X - I
    return LossResult(float(np.sum(residual ** 2)), -2.0 * residual)


def loss_mixed(X: ArrayOrField, I: ArrayOrField, var: ArrayOrField,
               clip_sigma: Optional[float] = None) -> LossResult:
    """sum ln(I + var) + (X - I)^2 / (I + var) for per-pixel readout variance.

    With `clip_sigma` the gradient (not the value) treats residuals beyond
    clip_sigma * sqrt(I + var) as if they sat on that bound. Near a fit every
    residual is inside it and the gradient is exact.
    """
    X = _values(X)
    I = _values(I)
    var = np.broadcast_to(_values(var), I.shape)
    _check_pair(X, I)
    if np.any(var <= 0):
        raise DomainError("Readout variance must be > 0 at every pixel (check dark calibration)")
    total = I + var
    residual = X - I
    value = float(np.sum(np.log(total) + residual ** 2 / total))
    if clip_sigma is not None:
        bound = clip_sigma * np.sqrt(total)
        residual = np.clip(residual, -bound, bound)
    grad = 1.0 / total - 2.0 * residual / total - residual ** 2 / total ** 2
    return LossResult(value, grad)


def evaluate_loss(kind: LossKind, X: ArrayOrField, I: ArrayOrField,
                  var: Optional[ArrayOrField] = None,
                  clip_sigma: Optional[float] = None) -> LossResult:
    """Dispatch to the configured fidelity loss, applying zero-cropping.

    `clip_sigma` only affects the mixed loss gradient; see loss_mixed.
    """
    X = crop_measurement(X) if kind.crops_measurement else _values(X)
    if kind.variant == LossVariant.POISSON:
        return loss_poisson(X, I, kind.epsilon)
    if kind.variant == LossVariant.GAUSSIAN:
        return loss_gaussian(X, I)
    if var is None:
        raise DomainError("The mixed loss requires a readout variance map")
    return loss_mixed(X, I, var, clip_sigma)


def _smooth_l1(z: np.ndarray, epsilon: float):
    magnitude = np.sqrt(np.abs(z) ** 2 + epsilon ** 2)
    return magnitude - epsilon, z / magnitude


def reg_probe_support(P: ArrayOrField, radius: float, alpha: float, pitch: Optional[float] = None,
                      epsilon: float = 1e-8) -> RegResult:
    """alpha * sum |P| over pixels outside the centered support disc."""
    if not radius > 0:
        raise DomainError(f"Support radius must be > 0, got {radius}")
    if pitch is None:
        if not isinstance(P, ComplexField):
            raise DomainError("Pixel pitch is required for a raw probe array")
        pitch = P.pitch
    z = _values(P, np.complex128)
    outside = ~centered_disc(z.shape[0], z.shape[1], pitch, radius)
    magnitude, direction = _smooth_l1(z, epsilon)
    value = alpha * float(np.sum(magnitude[outside]))
    return RegResult(value, alpha * np.where(outside, direction, 0.0))


def reg_object_amplitude(O: ArrayOrField, beta: float, epsilon: float = 1e-8) -> RegResult:
    """beta * sum |O| (smoothed at zero)."""
    magnitude, direction = _smooth_l1(_values(O, np.complex128), epsilon)
    return RegResult(beta * float(np.sum(magnitude)), beta * direction)


def reg_object_fourier(O: ArrayOrField, gamma: float, epsilon: float = 1e-8) -> RegResult:
    """gamma * sum |fft2(O)| with the unitary transform."""
    spectrum = sp_fft.fft2(_values(O, np.complex128), norm="ortho")
    magnitude, direction = _smooth_l1(spectrum, epsilon)
    grad = sp_fft.ifft2(gamma * direction, norm="ortho")
    return RegResult(gamma * float(np.sum(magnitude)), grad)


def fidelity_dominance_ratio(fidelity_value: float, reg_values: Iterable[float]) -> float:
    """fidelity / sum(regularizers); +inf when no regularizer contributes."""
    total = float(sum(reg_values))
    if total == 0:
        return math.inf
    return float(fidelity_value) / total
