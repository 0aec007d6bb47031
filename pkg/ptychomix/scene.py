"""Procedural ground truth: test object, pinhole probe and scan pattern."""

import logging
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import ndimage

from ptychomix.field import ComplexField, centered_disc
from ptychomix.forward import Scenario
from ptychomix.metrics import rescale_to_budget
from ptychomix.propagation import PropagatorSpec
from ptychomix.scan import ScanPattern, fermat_spiral, order_tsp, scale_for_overlap, to_pixel_offsets

logger = logging.getLogger(__name__)

BAR_WIDTHS = (6, 4, 3, 2)


class SceneConfig(BaseModel):
    """The [scene] config section; defaults are the desk-scale geometry."""
    model_config = ConfigDict(frozen=True)

    object_px: int = 128
    probe_px: int = 64
    pitch_m: float = 6.9e-6
    wavelength_m: float = 561e-9
    distance_m: float = 37.7e-3
    probe_radius_m: float = 8.0e-5
    n_positions: int = 20
    overlap: float = 0.6
    tsp_order: bool = True
    amplitude_low: float = 0.3
    phase_range_rad: float = 1.0
    probe_curvature_rad: float = 1.0
    seed: int = 0

    @field_validator('pitch_m', 'wavelength_m', 'distance_m', 'probe_radius_m')
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError('must be > 0')
        return v

    @field_validator('object_px', 'probe_px')
    @classmethod
    def validate_pixels(cls, v):
        if v < 4:
            raise ValueError('must be >= 4 pixels')
        return v

    @field_validator('n_positions')
    @classmethod
    def validate_positions(cls, v):
        if v < 2:
            raise ValueError('n_positions must be >= 2')
        return v

    @field_validator('overlap')
    @classmethod
    def validate_overlap(cls, v):
        if not 0 <= v < 1:
            raise ValueError('overlap must lie in [0, 1)')
        return v

    @field_validator('amplitude_low')
    @classmethod
    def validate_amplitude(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('amplitude_low must lie in [0, 1]')
        return v

    @model_validator(mode='after')
    def validate_geometry(self):
        if self.probe_px > self.object_px:
            raise ValueError('probe_px must not exceed object_px')
        return self

    @property
    def propagator_spec(self) -> PropagatorSpec:
        return PropagatorSpec(wavelength_m=self.wavelength_m, distance_m=self.distance_m,
                              height=self.probe_px, width=self.probe_px, pitch_m=self.pitch_m)


class Scene(NamedTuple):
    scenario: Scenario
    pattern: ScanPattern


def make_object(config: SceneConfig) -> ComplexField:
    """Binary bar-chart amplitude with smooth random phase blobs on top."""
    n = config.object_px
    amplitude = np.ones((n, n))
    quadrant = n // 2
    scale = n / 128.0
    for index, base_width in enumerate(BAR_WIDTHS):
        w = max(1, int(round(base_width * scale)))
        length = 5 * w
        qy, qx = divmod(index, 2)
        y0 = qy * quadrant + quadrant // 4
        x0 = qx * quadrant + quadrant // 8
        for b in range(3):
            # vertical bars, then horizontal bars to their right
            amplitude[y0:y0 + length, x0 + 2 * b * w:x0 + 2 * b * w + w] = config.amplitude_low
            xh = x0 + 6 * w
            amplitude[y0 + 2 * b * w:y0 + 2 * b * w + w, xh:xh + length] = config.amplitude_low

    rng = np.random.default_rng(config.seed)
    phase = ndimage.gaussian_filter(rng.standard_normal((n, n)), sigma=n / 12.0, mode='wrap')
    peak = np.abs(phase).max()
    if peak > 0:
        phase *= config.phase_range_rad / peak
    return ComplexField(amplitude * np.exp(1j * phase), config.pitch_m)


def make_probe(config: SceneConfig) -> ComplexField:
    """Soft-edged pinhole disc with a quadratic (defocus) phase, unit photon budget."""
    n = config.probe_px
    disc = centered_disc(n, n, config.pitch_m, config.probe_radius_m).astype(np.float64)
    amplitude = ndimage.gaussian_filter(disc, sigma=1.0)
    coords = (np.arange(n) - (n - 1) / 2.0) * config.pitch_m
    rho2 = (coords[:, None] ** 2 + coords[None, :] ** 2) / config.probe_radius_m ** 2
    probe = ComplexField(amplitude * np.exp(1j * config.probe_curvature_rad * rho2), config.pitch_m)
    return rescale_to_budget(probe, 1.0)


def make_pattern(config: SceneConfig) -> ScanPattern:
    scale = scale_for_overlap(config.probe_radius_m, config.overlap, config.n_positions)
    pattern = fermat_spiral(config.n_positions, scale, config.probe_radius_m, config.overlap)
    if config.tsp_order:
        pattern = order_tsp(pattern)
    return pattern


def build_scene(config: SceneConfig) -> Scene:
    obj = make_object(config)
    probe = make_probe(config)
    pattern = make_pattern(config)
    spec = config.propagator_spec
    offsets = to_pixel_offsets(pattern, config.pitch_m, obj.shape, spec.shape)
    logger.debug(
        f"Scene: object {obj.shape}, probe {spec.shape}, {len(offsets)} positions"
    )
    return Scene(Scenario(obj, probe, offsets, spec), pattern)


def probe_at_budget(probe: ComplexField, photons: float) -> ComplexField:
    return rescale_to_budget(probe, photons)
