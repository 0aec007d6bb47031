import numpy as np
import pytest

from ptychomix.exceptions import ArgumentError, DimensionError, DomainError
from ptychomix.field import ComplexField
from ptychomix.metrics import (
    FULL_FRAME,
    EvalRegion,
    align_global_phase,
    correlation,
    footprint_region,
    frame_snr,
    photon_budget,
    rescale_to_budget,
)


def random_object(rng, shape=(16, 16)):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_identical_fields_correlate_perfectly(rng):
    O = random_object(rng)
    assert correlation(O, O) == pytest.approx(1.0)


def test_global_phase_and_scale_invariance(rng):
    O = random_object(rng)
    assert correlation(O, 3.7 * np.exp(1.3j) * O) == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_fields():
    a = np.zeros((2, 2), dtype=complex)
    b = np.zeros((2, 2), dtype=complex)
    a[0, 0] = 1
    b[1, 1] = 1
    assert correlation(a, b) == 0.0


def test_correlation_bounds(rng):
    value = correlation(random_object(rng), random_object(rng))
    assert 0.0 <= value <= 1.0


def test_zero_field_is_undefined(rng):
    with pytest.raises(DomainError):
        correlation(np.zeros((4, 4)), random_object(rng, (4, 4)))


def test_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        correlation(random_object(rng, (4, 4)), random_object(rng, (5, 5)))


def test_region_restricts_evaluation(rng):
    O = random_object(rng, (8, 8))
    other = O.copy()
    other[4:, :] = random_object(rng, (4, 8))
    mask = np.zeros((8, 8), dtype=bool)
    mask[:4, :] = True
    assert correlation(O, other, EvalRegion(mask)) == pytest.approx(1.0)
    assert correlation(O, other, FULL_FRAME) < 0.99


def test_footprint_region_covers_probe_windows():
    probe = np.zeros((4, 4))
    probe[1:3, 1:3] = 1.0
    region = footprint_region((10, 10), probe, [(0, 0), (6, 6)])
    assert region.mask.sum() == 8
    assert region.mask[1, 1] and region.mask[8, 8]
    assert not region.mask[0, 0]


def test_footprint_needs_nonzero_probe():
    with pytest.raises(DomainError):
        footprint_region((8, 8), np.zeros((4, 4)), [(0, 0)])


def test_align_global_phase(rng):
    reference = ComplexField(random_object(rng), 1.0)
    rotated = reference.with_data(reference.data * np.exp(-2.1j))
    aligned = align_global_phase(rotated, reference)
    np.testing.assert_allclose(aligned.data, reference.data, atol=1e-12)


def test_photon_budget():
    assert photon_budget(np.zeros((4, 4))) == 0.0
    assert photon_budget(np.full((2, 2), 1 + 1j)) == pytest.approx(8.0)


def test_rescale_to_budget(rng):
    probe = ComplexField(random_object(rng), 1.0)
    rescaled = rescale_to_budget(probe, 3.4e5)
    assert photon_budget(rescaled) == pytest.approx(3.4e5, rel=1e-9)
    assert correlation(probe, rescaled) == pytest.approx(1.0)


def test_rescale_rejects_bad_input(rng):
    with pytest.raises(ArgumentError):
        rescale_to_budget(ComplexField(random_object(rng), 1.0), 0.0)
    with pytest.raises(DomainError):
        rescale_to_budget(ComplexField.zeros((4, 4), 1.0), 10.0)


def test_frame_snr():
    assert frame_snr(np.full((4, 4), 100.0), np.full((4, 4), 2.25)) == pytest.approx(
        100 / np.sqrt(102.25))


def test_correlation_is_symmetric(rng):
    a = random_object(rng)
    b = random_object(rng)
    assert correlation(a, b) == pytest.approx(correlation(b, a), rel=1e-14)


def test_identical_masking_leaves_correlation_unchanged(rng):
    a = random_object(rng, (8, 8))
    b = random_object(rng, (8, 8))
    mask = rng.uniform(size=(8, 8)) > 0.4
    region = EvalRegion(mask)
    masked = correlation(np.where(mask, a, 0), np.where(mask, b, 0), FULL_FRAME)
    assert correlation(a, b, region) == pytest.approx(masked, rel=1e-12)


def test_default_footprint_drops_the_dim_rim():
    y, x = np.mgrid[-4:5, -4:5]
    probe = np.exp(-(x ** 2 + y ** 2) / 8.0)
    region = footprint_region((9, 9), probe, [(0, 0)])
    assert region.mask[4, 4]
    assert not region.mask[0, 0]
    assert footprint_region((9, 9), probe, [(0, 0)], threshold=1e-6).mask.all()
