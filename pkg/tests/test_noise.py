import numpy as np
import pytest
from pydantic import ValidationError

from ptychomix.exceptions import ArgumentError, DimensionError
from ptychomix.field import RealField
from ptychomix.noise import (
    NoiseConfig,
    NoiseModel,
    adu_to_counts,
    calibrate_dark,
    estimate_variance_map,
    minimal_black_level,
    preprocess,
    sample_dark_stack,
    sample_frame,
)


def test_mixed_noise_variance():
    model = NoiseModel(sigma=1.5, seed=11)
    frame = sample_frame(np.full((100, 1000), 100.0), model)
    assert frame.var() == pytest.approx(102.25, rel=0.02)
    assert frame.mean() == pytest.approx(100.0, abs=0.2)


def test_degenerate_noise_is_exact():
    frame = sample_frame(np.zeros((8, 8)), NoiseModel(sigma=0.0))
    assert not np.any(frame)


def test_black_level_is_added():
    frame = sample_frame(np.zeros((4, 4)), NoiseModel(sigma=0.0, black_level=7.0))
    np.testing.assert_array_equal(frame, 7.0)


def test_sampling_is_reproducible():
    I = np.linspace(0, 500, 64).reshape(8, 8)
    model = NoiseModel(sigma=1.5, seed=5)
    first = sample_frame(I, model, index=3)
    np.testing.assert_array_equal(first, sample_frame(I, model, index=3))
    assert not np.array_equal(first, sample_frame(I, model, index=4))


def test_sample_frame_keeps_field_type():
    field = RealField(np.ones((4, 4)), 6.9e-6)
    out = sample_frame(field, NoiseModel(sigma=1.0))
    assert isinstance(out, RealField)
    assert out.pitch == field.pitch


def test_large_budget_concentrates_on_prediction():
    I = np.full((16, 16), 1e12)
    frame = sample_frame(I, NoiseModel(sigma=0.0, seed=2))
    assert np.max(np.abs(frame - I) / I) < 1e-5


def test_per_pixel_sigma_map():
    sigma = np.ones((4, 4))
    sigma[0, 0] = 2.0
    model = NoiseModel(sigma=sigma)
    assert model.variance_map((4, 4))[0, 0] == 4.0
    with pytest.raises(DimensionError):
        model.variance_map((5, 5))


def test_model_validation():
    with pytest.raises(ArgumentError):
        NoiseModel(sigma=-1.0)
    with pytest.raises(ArgumentError):
        NoiseModel(gain_inv=0.0)


def test_dark_stack_statistics():
    model = NoiseModel(sigma=1.5, black_level=10.0, seed=9)
    stack = sample_dark_stack(model, (32, 32), 300)
    assert stack.shape == (300, 32, 32)
    bound = 3 * 1.5 / np.sqrt(300)
    # per pixel CLT bound holds for the overwhelming majority of pixels
    assert np.mean(np.abs(stack.mean(axis=0) - 10.0) < bound) > 0.99
    assert estimate_variance_map(stack).mean() == pytest.approx(2.25, rel=0.02)


def test_noise_free_dark_stack_is_black_level():
    stack = sample_dark_stack(NoiseModel(sigma=0.0, black_level=3.0), (4, 4), 5)
    np.testing.assert_array_equal(stack, 3.0)


def test_variance_of_constant_stack_is_zero():
    assert not np.any(estimate_variance_map(np.full((10, 3, 3), 4.2)))


def test_variance_is_unbiased():
    stack = np.stack([np.zeros((2, 2)), np.full((2, 2), 2.0)])
    np.testing.assert_allclose(estimate_variance_map(stack), 2.0)


def test_variance_needs_two_frames():
    with pytest.raises(ArgumentError):
        estimate_variance_map(np.zeros((1, 4, 4)))


def test_variance_gain_conversion():
    stack = np.stack([np.zeros((2, 2)), np.full((2, 2), 2.0)])
    np.testing.assert_allclose(estimate_variance_map(stack, gain_inv=2.7), 2.0 * 2.7 ** 2)


def test_preprocess_subtracts_without_cropping():
    dark = np.full((3, 3), 10.0)
    raw = dark.copy()
    assert not np.any(preprocess(raw, dark))
    raw[1, 1] = 8.0
    out = preprocess(raw, dark, gain_inv=2.7)
    assert out[1, 1] == pytest.approx(-5.4)


def test_preprocess_shape_mismatch():
    with pytest.raises(DimensionError):
        preprocess(np.zeros((3, 3)), np.zeros((4, 4)))


def test_adu_conversion():
    np.testing.assert_allclose(adu_to_counts(np.array([1.0, 10.0]), 2.7), [2.7, 27.0])


def test_calibrate_dark_bundles_mean_and_variance():
    stack = sample_dark_stack(NoiseModel(sigma=1.5, black_level=20.0, seed=1), (8, 8), 50)
    calibration = calibrate_dark(stack)
    np.testing.assert_allclose(calibration.mean, stack.mean(axis=0))
    np.testing.assert_allclose(calibration.variance, np.var(stack, axis=0, ddof=1))


def test_minimal_black_level_lifts_every_pixel():
    stack = sample_dark_stack(NoiseModel(sigma=1.5, seed=4), (16, 16), 20)
    level = minimal_black_level(stack)
    assert np.all(stack + level > 0)
    assert np.any(stack + level - 1 <= 0)
    assert minimal_black_level(np.full((2, 2, 2), 5.0)) == 0


def test_noise_config_validation():
    assert NoiseConfig().to_model(seed=3).seed == 3
    with pytest.raises(ValidationError):
        NoiseConfig(dark_frames=1)
    with pytest.raises(ValidationError):
        NoiseConfig(sigma_counts=-0.1)


def test_preprocess_is_linear(rng):
    a = rng.uniform(0, 100, (5, 5))
    b = rng.uniform(0, 100, (5, 5))
    dark = rng.uniform(5, 15, (5, 5))
    np.testing.assert_allclose(preprocess(a + b, dark, gain_inv=2.7),
                               preprocess(a, dark, gain_inv=2.7) +
                               preprocess(b, np.zeros((5, 5)), gain_inv=2.7),
                               rtol=1e-12)


def test_background_subtraction_is_unbiased():
    model = NoiseModel(sigma=1.5, black_level=10.0, seed=21)
    dark_mean = sample_dark_stack(model, (256, 256), 300).mean(axis=0)
    frame = sample_frame(np.full((256, 256), 50.0), model)
    corrected = preprocess(frame, dark_mean)
    assert corrected.mean() == pytest.approx(50.0, abs=0.15)
    # readout noise survives the subtraction, so some pixels of a dim frame go negative
    dim = preprocess(sample_frame(np.zeros((256, 256)), model, index=1), dark_mean)
    assert dim.mean() == pytest.approx(0.0, abs=0.05)
    assert np.any(dim < 0)
