"""Shared fixtures: small scenes that keep every test well under a second or two."""

import numpy as np
import pytest
import toml

from ptychomix.dataset import DiffractionDataset
from ptychomix.field import ComplexField, centered_disc
from ptychomix.forward import Scenario, predict_intensity
from ptychomix.propagation import PropagatorSpec

PITCH = 6.9e-6
WAVELENGTH = 561e-9


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def grid_offsets(object_px: int, probe_px: int, step: int):
    starts = range(0, object_px - probe_px + 1, step)
    return [(r, c) for r in starts for c in starts]


def make_scenario(object_px=32, probe_px=16, step=4, distance_m=2e-3, seed=7) -> Scenario:
    """Smooth phase/amplitude object under a soft disc probe on a raster grid."""
    gen = np.random.default_rng(seed)
    y, x = np.mgrid[0:object_px, 0:object_px] / object_px
    amplitude = 0.75 + 0.2 * np.cos(2 * np.pi * (x + 0.5 * y)) + 0.03 * gen.standard_normal(x.shape)
    phase = 0.8 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    obj = ComplexField(amplitude * np.exp(1j * phase), PITCH)

    disc = centered_disc(probe_px, probe_px, PITCH, 0.35 * probe_px * PITCH).astype(float)
    probe = ComplexField(20.0 * disc * np.exp(0.3j * np.arange(probe_px)[None, :] / probe_px),
                         PITCH)
    spec = PropagatorSpec(wavelength_m=WAVELENGTH, distance_m=distance_m,
                          height=probe_px, width=probe_px, pitch_m=PITCH)
    return Scenario(obj, probe, grid_offsets(object_px, probe_px, step), spec)


def noise_free_dataset(scenario: Scenario, variance=None) -> DiffractionDataset:
    frames = np.stack([predict_intensity(scenario, k).data for k in range(len(scenario.positions))])
    return DiffractionDataset(frames, scenario.positions, scenario.obj.shape, scenario.spec,
                              variance=variance)


@pytest.fixture
def scenario():
    return make_scenario()


@pytest.fixture
def clean_dataset(scenario):
    return noise_free_dataset(scenario)


SMALL_CONFIG = {
    'scene': {
        'object_px': 48,
        'probe_px': 24,
        'probe_radius_m': 5 * PITCH,
        'n_positions': 6,
        'overlap': 0.5,
        'seed': 3,
    },
    'noise': {'sigma_counts': 1.5, 'dark_frames': 20},
    'regularization': {'support_radius_m': 10 * PITCH},
    'schedule': {'epochs': 3},
    'sweep': {
        'photon_budgets': [1e4, 1e6],
        'variants': ['poisson_crop', 'mixed_raw'],
        'repetitions': 1,
        'epochs': 3,
        'record_wall_time': False,
    },
}


@pytest.fixture
def small_config_path(tmp_path):
    path = tmp_path / "config.toml"
    with open(path, 'w') as f:
        toml.dump(SMALL_CONFIG, f)
    return path
