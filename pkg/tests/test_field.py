import numpy as np
import pytest

from ptychomix.exceptions import DimensionError, DomainError, RegionError
from ptychomix.field import (
    ComplexField,
    RealField,
    accumulate_region,
    centered_disc,
    extract_region,
    fft2,
    ifft2,
    inner,
)


def test_fields_are_immutable_copies():
    source = np.ones((3, 3))
    field = RealField(source, 1e-6)
    source[0, 0] = 5
    assert field.data[0, 0] == 1
    with pytest.raises(ValueError):
        field.data[0, 0] = 2


def test_field_rejects_bad_shape_and_pitch():
    with pytest.raises(DimensionError):
        ComplexField(np.zeros(4), 1e-6)
    with pytest.raises(DomainError):
        ComplexField(np.zeros((2, 2)), 0.0)


def test_extract_full_region_is_identity():
    field = ComplexField(np.arange(16).reshape(4, 4), 1e-6)
    out = extract_region(field, (0, 0), (4, 4))
    np.testing.assert_array_equal(out.data, field.data)
    assert out.pitch == field.pitch


def test_extract_index_arithmetic():
    data = np.zeros((4, 4))
    data[2, 3] = 1
    out = extract_region(RealField(data, 1.0), (2, 2), (2, 2))
    expected = np.array([[0, 1], [0, 0]])
    np.testing.assert_array_equal(out.data, expected)


def test_extract_out_of_range():
    field = RealField(np.zeros((4, 4)), 1.0)
    with pytest.raises(RegionError):
        extract_region(field, (3, 3), (2, 2))
    with pytest.raises(IndexError):
        extract_region(field, (-1, 0), (2, 2))


def test_accumulate_zeros_leaves_target():
    target = ComplexField(np.ones((4, 4)), 1.0)
    out = accumulate_region(target, (1, 1), ComplexField.zeros((2, 2), 1.0))
    np.testing.assert_array_equal(out.data, target.data)


def test_accumulate_then_extract_adds_prior_content():
    target = ComplexField(np.full((4, 4), 2.0), 1.0)
    patch = ComplexField(np.array([[1, 2j], [3, 4]]), 1.0)
    out = accumulate_region(target, (2, 1), patch)
    np.testing.assert_array_equal(extract_region(out, (2, 1), (2, 2)).data, patch.data + 2.0)
    # original untouched
    assert np.all(target.data == 2.0)


def test_extract_accumulate_adjoint(rng):
    F = ComplexField(rng.standard_normal((9, 7)) + 1j * rng.standard_normal((9, 7)), 1.0)
    G = ComplexField(rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3)), 1.0)
    offset = (3, 2)
    lhs = inner(extract_region(F, offset, G.shape), G)
    rhs = inner(F, accumulate_region(ComplexField.zeros(F.shape, 1.0), offset, G))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_unitary_fft_round_trip(rng):
    data = rng.standard_normal((8, 6)) + 1j * rng.standard_normal((8, 6))
    field = ComplexField(data, 1.0)
    spectrum = fft2(field)
    assert np.linalg.norm(spectrum.data) == pytest.approx(np.linalg.norm(data), rel=1e-12)
    np.testing.assert_allclose(ifft2(spectrum).data, data, atol=1e-12)


def test_fft_of_constant_is_single_peak():
    spectrum = fft2(ComplexField.ones((4, 4), 1.0))
    assert spectrum.data[0, 0] == pytest.approx(4.0)
    assert np.count_nonzero(np.abs(spectrum.data) > 1e-12) == 1


def test_centered_disc_is_symmetric():
    mask = centered_disc(6, 6, 1.0, 2.0)
    np.testing.assert_array_equal(mask, mask[::-1, ::-1])
    np.testing.assert_array_equal(mask, mask.T)
    assert mask[2, 2] and mask[3, 3]
    assert not mask[0, 0]
