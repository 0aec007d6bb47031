"""Ptychographic forward model and its adjoint.

The exit wave at a scan position is the probe times the object patch under it
(thin-object model). It is propagated to the camera and the predicted intensity
is its squared modulus.

Gradients follow the Wirtinger convention: for a real loss L the returned g is
dL/d(conj z), so that dL/dRe(z) = 2 Re(g) and dL/dIm(z) = 2 Im(g).
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from ptychomix.exceptions import DimensionError, RegionError
from ptychomix.field import ComplexField, Pixel, RealField, accumulate_region, check_region
from ptychomix.propagation import Propagator, PropagatorSpec, build_propagator


class ForwardPass(NamedTuple):
    patch: np.ndarray
    detector_field: np.ndarray
    intensity: np.ndarray


def forward_pass(obj: np.ndarray, probe: np.ndarray, offset: Pixel,
                 propagator: Propagator) -> ForwardPass:
    """Evaluate one scan position on raw arrays."""
    check_region(obj.shape, offset, probe.shape)
    r, c = int(offset[0]), int(offset[1])
    patch = obj[r:r + probe.shape[0], c:c + probe.shape[1]]
    field = propagator.forward(probe * patch)
    return ForwardPass(patch, field, np.abs(field) ** 2)


def backward_pass(fp: ForwardPass, probe: np.ndarray, dL_dI: np.ndarray,
                  propagator: Propagator) -> Tuple[np.ndarray, np.ndarray]:
    """Wirtinger gradients (object patch, probe) for dL/dI at one position."""
    if dL_dI.shape != fp.intensity.shape:
        raise DimensionError(
            f"dL/dI shape {dL_dI.shape} does not match camera shape {fp.intensity.shape}"
        )
    back = propagator.adjoint(dL_dI * fp.detector_field)
    return np.conj(probe) * back, np.conj(fp.patch) * back


@dataclass(frozen=True, eq=False)
class Scenario:
    """Object, probe, integer scan offsets and propagation geometry."""
    obj: ComplexField
    probe: ComplexField
    positions: Tuple[Pixel, ...]
    spec: PropagatorSpec

    def __post_init__(self):
        positions = tuple((int(r), int(c)) for r, c in self.positions)
        object.__setattr__(self, "positions", positions)
        if self.probe.shape != self.spec.shape:
            raise DimensionError(
                f"Probe shape {self.probe.shape} does not match propagator shape {self.spec.shape}"
            )
        for offset in positions:
            check_region(self.obj.shape, offset, self.probe.shape)

    @property
    def propagator(self) -> Propagator:
        return build_propagator(self.spec)

    def with_object(self, obj: ComplexField) -> "Scenario":
        return Scenario(obj, self.probe, self.positions, self.spec)

    def with_probe(self, probe: ComplexField) -> "Scenario":
        return Scenario(self.obj, probe, self.positions, self.spec)

    def offset(self, position_index: int) -> Pixel:
        if not 0 <= position_index < len(self.positions):
            raise RegionError(
                f"Position index {position_index} outside 0..{len(self.positions) - 1}"
            )
        return self.positions[position_index]

    def run(self, position_index: int) -> ForwardPass:
        return forward_pass(self.obj.data, self.probe.data, self.offset(position_index),
                            self.propagator)


def _dl_di_array(dL_dI) -> np.ndarray:
    return np.asarray(dL_dI.data if isinstance(dL_dI, RealField) else dL_dI, dtype=np.float64)


def predict_intensity(s: Scenario, position_index: int) -> RealField:
    """|propagate(P * O_patch)|^2 at one scan position."""
    return RealField(s.run(position_index).intensity, s.probe.pitch)


def gradient_object(s: Scenario, position_index: int, dL_dI) -> ComplexField:
    """Object-sized Wirtinger gradient of a per-pixel loss at one position."""
    fp = s.run(position_index)
    g_patch, _ = backward_pass(fp, s.probe.data, _dl_di_array(dL_dI), s.propagator)
    return accumulate_region(
        ComplexField.zeros(s.obj.shape, s.obj.pitch),
        s.offset(position_index),
        ComplexField(g_patch, s.obj.pitch),
    )


def gradient_probe(s: Scenario, position_index: int, dL_dI) -> ComplexField:
    """Probe Wirtinger gradient of a per-pixel loss at one position."""
    fp = s.run(position_index)
    _, g_probe = backward_pass(fp, s.probe.data, _dl_di_array(dL_dI), s.propagator)
    return ComplexField(g_probe, s.probe.pitch)

