"""Correlation versus photon budget study over the fidelity-loss variants."""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from ptychomix.dataset import simulate_dataset
from ptychomix.exceptions import DivergenceError
from ptychomix.io import write_csv
from ptychomix.loss import LossKind, LossVariant
from ptychomix.metrics import correlation, footprint_region, rescale_to_budget
from ptychomix.noise import NoiseConfig
from ptychomix.scene import SceneConfig, build_scene
from ptychomix.solver import InitialObject, ReconstructionConfig, ReconstructionMode, reconstruct

logger = logging.getLogger(__name__)

SWEEP_HEADER = ["budget", "variant", "seed", "C", "final_fidelity", "wall_ms"]


class SweepVariant(str, Enum):
    POISSON_CROP = "poisson_crop"
    MIXED_CROP = "mixed_crop"
    MIXED_RAW = "mixed_raw"
    GAUSSIAN = "gaussian"

    def loss_kind(self, epsilon: float = 1e-12) -> LossKind:
        variant, zero_crop = _VARIANT_LOSSES[self]
        return LossKind(variant=variant, zero_crop=zero_crop, epsilon=epsilon)


_VARIANT_LOSSES: Dict[SweepVariant, Tuple[LossVariant, bool]] = {
    SweepVariant.POISSON_CROP: (LossVariant.POISSON, True),
    SweepVariant.MIXED_CROP: (LossVariant.MIXED, True),
    SweepVariant.MIXED_RAW: (LossVariant.MIXED, False),
    SweepVariant.GAUSSIAN: (LossVariant.GAUSSIAN, False),
}
VARIANT_ORDER = list(SweepVariant)


class SweepSpec(BaseModel):
    """The [sweep] config section."""
    model_config = ConfigDict(frozen=True)

    photon_budgets: List[float] = [1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9]
    variants: List[SweepVariant] = VARIANT_ORDER
    repetitions: int = 3
    seed: int = 0
    epochs: int = 100
    record_wall_time: bool = False

    @field_validator('photon_budgets')
    @classmethod
    def validate_budgets(cls, v):
        if not v:
            raise ValueError('at least one photon budget is required')
        if any(b <= 0 for b in v):
            raise ValueError('photon budgets must be > 0')
        if any(b >= a for a, b in zip(v[1:], v)):
            raise ValueError('photon budgets must be sorted ascending')
        return v

    @field_validator('variants')
    @classmethod
    def validate_variants(cls, v):
        if not v:
            raise ValueError('at least one variant is required')
        return v

    @field_validator('repetitions', 'epochs')
    @classmethod
    def validate_count(cls, v):
        if v < 1:
            raise ValueError('must be >= 1')
        return v


class SweepRow(NamedTuple):
    budget: float
    variant: SweepVariant
    seed: int
    correlation: float
    final_fidelity: float
    wall_ms: int

    def as_csv(self) -> List[str]:
        return [repr(float(self.budget)), self.variant.value, str(self.seed),
                repr(float(self.correlation)), repr(float(self.final_fidelity)),
                str(self.wall_ms)]


class SweepSummary(NamedTuple):
    budget: float
    variant: SweepVariant
    mean: float
    stderr: float
    runs: int
    diverged: int


def thread_split(threads: int, points: int) -> Tuple[int, int]:
    """(sweep workers, threads per reconstruction) with workers * inner <= threads."""
    threads = max(1, min(threads, os.cpu_count() or 1))
    workers = max(1, min(threads, points))
    return workers, max(1, threads // workers)


def run_sweep(spec: SweepSpec, scene_config: SceneConfig = SceneConfig(),
              noise: NoiseConfig = NoiseConfig(),
              base: ReconstructionConfig = ReconstructionConfig(),
              out_csv: Optional[Union[str, Path]] = None, threads: int = 1) -> List[SweepRow]:
    """Simulate each (budget, repetition) once and reconstruct it with every variant."""
    scene = build_scene(scene_config)
    truth = scene.scenario
    region = footprint_region(truth.obj.shape, truth.probe, truth.positions)
    points = [(budget, spec.seed + rep) for budget in spec.photon_budgets
              for rep in range(spec.repetitions)]
    workers, inner = thread_split(threads, len(points))
    schedule = base.schedule.model_copy(update={"epochs": spec.epochs})
    logger.info(
        f"Sweep: {len(spec.photon_budgets)} budgets x {spec.repetitions} repetitions x "
        f"{len(spec.variants)} variants on {workers} workers ({inner} threads each)"
    )

    def run_point(point: Tuple[float, int]) -> List[SweepRow]:
        budget, seed = point
        dataset = simulate_dataset(truth, noise, seed, photons=budget, pattern=scene.pattern)
        probe = rescale_to_budget(truth.probe, budget)
        rows = []
        for variant in spec.variants:
            config = base.model_copy(update={
                "loss": variant.loss_kind(base.loss.epsilon),
                "schedule": schedule,
                "mode": ReconstructionMode.OBJECT_ONLY,
                "initial_object": InitialObject.UNIFORM_ONE,
                "threads": inner,
            })
            start = time.perf_counter()
            try:
                report = reconstruct(dataset, config, probe=probe)
                c = correlation(truth.obj, report.obj, region)
                fidelity = report.final_fidelity
            except DivergenceError as e:
                logger.warning(f"Sweep run diverged (budget {budget:g}, {variant.value}, "
                               f"seed {seed}): {e}")
                c = fidelity = math.nan
            wall_ms = int(round((time.perf_counter() - start) * 1000)) if spec.record_wall_time else 0
            rows.append(SweepRow(float(budget), variant, seed, c, fidelity, wall_ms))
        logger.info(f"Sweep point done: budget {budget:g}, seed {seed}")
        return rows

    if workers == 1:
        results = [run_point(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_point, points))

    rows = sorted((row for batch in results for row in batch), key=_row_key)
    if out_csv is not None:
        write_sweep_csv(out_csv, rows)
    return rows


def _row_key(row: SweepRow):
    return row.budget, VARIANT_ORDER.index(row.variant), row.seed


def write_sweep_csv(path: Union[str, Path], rows: List[SweepRow]) -> Path:
    path = write_csv(path, SWEEP_HEADER, (row.as_csv() for row in rows))
    logger.info(f"Wrote {len(rows)} sweep rows to {path}")
    return path


def summarize(rows: List[SweepRow]) -> List[SweepSummary]:
    """Mean correlation and its standard error per (budget, variant); NaN runs excluded."""
    groups: Dict[Tuple[float, SweepVariant], List[float]] = {}
    for row in sorted(rows, key=_row_key):
        groups.setdefault((row.budget, row.variant), []).append(row.correlation)
    summary = []
    for (budget, variant), values in groups.items():
        values = np.asarray(values, dtype=np.float64)
        finite = values[np.isfinite(values)]
        n = len(finite)
        mean = float(finite.mean()) if n else math.nan
        stderr = float(finite.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        summary.append(SweepSummary(budget, variant, mean, stderr, n, len(values) - n))
    return summary
