import logging
import math

import pytest
from pydantic import ValidationError

from conftest import SMALL_CONFIG
from ptychomix.exceptions import DivergenceError
from ptychomix.loss import LossVariant
from ptychomix.noise import NoiseConfig
from ptychomix.scene import SceneConfig
from ptychomix.sweep import (
    SWEEP_HEADER,
    SweepRow,
    SweepSpec,
    SweepVariant,
    run_sweep,
    summarize,
    thread_split,
)

SCENE = SceneConfig(**SMALL_CONFIG['scene'])
NOISE = NoiseConfig(sigma_counts=1.5, dark_frames=0)


def tiny_spec(**overrides):
    values = dict(photon_budgets=[1e4, 1e6], variants=[SweepVariant.POISSON_CROP,
                                                        SweepVariant.MIXED_RAW],
                  repetitions=1, epochs=2, record_wall_time=False)
    values.update(overrides)
    return SweepSpec(**values)


def test_variant_losses():
    assert SweepVariant.POISSON_CROP.loss_kind().variant == LossVariant.POISSON
    assert SweepVariant.MIXED_CROP.loss_kind().crops_measurement
    assert not SweepVariant.MIXED_RAW.loss_kind().crops_measurement
    assert SweepVariant.GAUSSIAN.loss_kind().variant == LossVariant.GAUSSIAN


def test_spec_validation():
    with pytest.raises(ValidationError):
        SweepSpec(photon_budgets=[1e5, 1e4])
    with pytest.raises(ValidationError):
        SweepSpec(photon_budgets=[0.0, 1e4])
    with pytest.raises(ValidationError):
        SweepSpec(variants=[])


def test_single_point_gives_one_row(tmp_path):
    spec = tiny_spec(photon_budgets=[1e5], variants=[SweepVariant.GAUSSIAN])
    rows = run_sweep(spec, SCENE, NOISE, out_csv=tmp_path / "s.csv")
    assert len(rows) == 1
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_HEADER)
    assert len(lines) == 2
    assert 0.0 <= rows[0].correlation <= 1.0
    assert rows[0].wall_ms == 0


def test_rows_are_sorted_and_csv_is_reproducible(tmp_path):
    spec = tiny_spec(repetitions=2)
    rows = run_sweep(spec, SCENE, NOISE, out_csv=tmp_path / "a.csv", threads=1)
    run_sweep(spec, SCENE, NOISE, out_csv=tmp_path / "b.csv", threads=2)
    assert len(rows) == 2 * 2 * 2
    keys = [(r.budget, r.variant.value, r.seed) for r in rows]
    assert keys == [
        (1e4, "poisson_crop", 0), (1e4, "poisson_crop", 1),
        (1e4, "mixed_raw", 0), (1e4, "mixed_raw", 1),
        (1e6, "poisson_crop", 0), (1e6, "poisson_crop", 1),
        (1e6, "mixed_raw", 0), (1e6, "mixed_raw", 1),
    ]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_divergence_becomes_nan_row(monkeypatch, caplog):
    def diverge(*args, **kwargs):
        raise DivergenceError(3, 0.05, float("nan"))

    monkeypatch.setattr("ptychomix.sweep.reconstruct", diverge)
    with caplog.at_level(logging.WARNING):
        rows = run_sweep(tiny_spec(photon_budgets=[1e4]), SCENE, NOISE)
    assert len(rows) == 2
    assert all(math.isnan(r.correlation) for r in rows)
    assert "diverged" in caplog.text
    summary = summarize(rows)
    assert all(s.diverged == 1 and s.runs == 0 for s in summary)


def test_summarize_statistics():
    rows = [SweepRow(1e3, SweepVariant.GAUSSIAN, seed, c, 1.0, 0)
            for seed, c in enumerate([0.5, 0.7, 0.9])]
    rows.append(SweepRow(1e3, SweepVariant.GAUSSIAN, 3, float("nan"), float("nan"), 0))
    (summary,) = summarize(rows)
    assert summary.mean == pytest.approx(0.7)
    assert summary.stderr == pytest.approx(0.2 / math.sqrt(3))
    assert summary.runs == 3
    assert summary.diverged == 1


def test_thread_split_never_oversubscribes():
    for threads in (1, 2, 3, 8, 64):
        for points in (1, 3, 21):
            workers, inner = thread_split(threads, points)
            assert workers >= 1 and inner >= 1
            assert workers <= points
            assert workers * inner <= max(1, threads)


def test_record_wall_time_is_opt_in(tmp_path):
    assert SweepSpec().record_wall_time is False
    spec = SweepSpec(photon_budgets=[1e5], variants=[SweepVariant.GAUSSIAN], repetitions=1,
                     epochs=1)
    rows = run_sweep(spec, SCENE, NOISE, out_csv=tmp_path / "s.csv")
    assert rows[0].wall_ms == 0
    assert (tmp_path / "s.csv").read_text().splitlines()[1].endswith(",0")


TREND_SCENE = SceneConfig(object_px=80, probe_px=32, probe_radius_m=6e-5, n_positions=12,
                          overlap=0.6, seed=1)


def test_correlation_trend_across_photon_budgets():
    spec = SweepSpec(photon_budgets=[1e3, 1e9], variants=list(SweepVariant), repetitions=3,
                     epochs=100)
    summary = {(s.budget, s.variant): s.mean
               for s in summarize(run_sweep(spec, TREND_SCENE, NOISE))}

    for variant in SweepVariant:
        assert summary[(1e9, variant)] >= 0.99, variant

    low = {variant: summary[(1e3, variant)] for variant in SweepVariant}
    assert low[SweepVariant.MIXED_RAW] >= low[SweepVariant.POISSON_CROP] + 0.05
    assert low[SweepVariant.POISSON_CROP] <= low[SweepVariant.MIXED_CROP] <= \
        low[SweepVariant.MIXED_RAW]
    assert low[SweepVariant.GAUSSIAN] == min(low.values())
