"""Diffraction datasets: simulation and the on-disk directory layout.

A dataset directory holds PGA1 arrays, the scan positions as CSV and a
manifest.json recording the sha256 of every file next to the geometry, seeds
and configs that produced it.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union

import numpy as np

from ptychomix.exceptions import DimensionError, FormatError
from ptychomix.field import ComplexField, Pixel, check_region
from ptychomix.forward import Scenario, predict_intensity
from ptychomix.io import (
    read_field,
    read_json,
    read_pga1,
    read_positions_csv,
    sha256_file,
    write_field,
    write_json,
    write_pga1,
    write_positions_csv,
)
from ptychomix.metrics import rescale_to_budget
from ptychomix.noise import (
    NoiseConfig,
    calibrate_dark,
    preprocess,
    sample_dark_stack,
    sample_frame,
)
from ptychomix.propagation import PropagatorSpec
from ptychomix.scan import ScanPattern, pattern_from_offsets, to_pixel_offsets

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "ptychomix-dataset"
MANIFEST_VERSION = 1

FRAMES_FILE = "frames.pga1"
VARIANCE_FILE = "variance.pga1"
DARK_MEAN_FILE = "dark_mean.pga1"
OBJECT_FILE = "object_gt.pga1"
PROBE_FILE = "probe.pga1"
POSITIONS_FILE = "positions.csv"


@dataclass(frozen=True, eq=False)
class DiffractionDataset:
    """Preprocessed frames (counts, background subtracted) with their scan geometry."""
    frames: np.ndarray
    offsets: Tuple[Pixel, ...]
    object_shape: Tuple[int, int]
    spec: PropagatorSpec
    variance: Optional[np.ndarray] = None
    dark_mean: Optional[np.ndarray] = None
    pattern: Optional[ScanPattern] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise DimensionError(f"Frames must be (count, height, width), got {frames.shape}")
        if frames.shape[1:] != self.spec.shape:
            raise DimensionError(
                f"Frame shape {frames.shape[1:]} does not match propagator shape {self.spec.shape}"
            )
        offsets = tuple((int(r), int(c)) for r, c in self.offsets)
        if len(offsets) != frames.shape[0]:
            raise DimensionError(f"{frames.shape[0]} frames but {len(offsets)} scan offsets")
        object_shape = (int(self.object_shape[0]), int(self.object_shape[1]))
        for offset in offsets:
            check_region(object_shape, offset, self.spec.shape)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "object_shape", object_shape)
        for name in ("variance", "dark_mean"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.array(value, dtype=np.float64)
            if value.shape != self.spec.shape:
                raise DimensionError(f"{name} shape {value.shape} does not match frames")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if self.pattern is None:
            object.__setattr__(self, "pattern", pattern_from_offsets(
                offsets, self.spec.pitch_m, object_shape, self.spec.shape))

    @property
    def n_positions(self) -> int:
        return self.frames.shape[0]

    @property
    def pitch(self) -> float:
        return self.spec.pitch_m


class GroundTruth(NamedTuple):
    obj: ComplexField
    probe: ComplexField


def simulate_dataset(scenario: Scenario, noise: NoiseConfig, seed: int,
                     photons: Optional[float] = None,
                     pattern: Optional[ScanPattern] = None) -> DiffractionDataset:
    """Noisy, preprocessed frames for every scan position of `scenario`.

    With photons set, the probe is first rescaled to that budget. A simulated
    dark stack of noise.dark_frames frames supplies the background and the
    variance map; dark_frames = 0 uses the exact model values instead.
    """
    if photons is not None:
        scenario = scenario.with_probe(rescale_to_budget(scenario.probe, photons))
    model = noise.to_model(seed)
    shape = scenario.spec.shape
    raw = np.stack([
        sample_frame(predict_intensity(scenario, k).data, model, index=k)
        for k in range(len(scenario.positions))
    ])
    if noise.dark_frames:
        calibration = calibrate_dark(sample_dark_stack(model, shape, noise.dark_frames))
        dark_mean, variance = calibration.mean, calibration.variance
    else:
        dark_mean = np.full(shape, model.black_level)
        variance = model.variance_map(shape)
    frames = preprocess(raw, dark_mean)
    metadata = {
        "seed": int(seed),
        "photons": float(np.sum(np.abs(scenario.probe.data) ** 2)),
        "noise": noise.model_dump(mode="json"),
    }
    logger.info(
        f"Simulated {len(raw)} frames at {metadata['photons']:.4g} photons/exposure (seed {seed})"
    )
    return DiffractionDataset(frames, scenario.positions, scenario.obj.shape, scenario.spec,
                              variance=variance, dark_mean=dark_mean, pattern=pattern,
                              metadata=metadata)


def save_dataset(dataset: DiffractionDataset, out_dir: Union[str, Path],
                 ground_truth: Optional[GroundTruth] = None,
                 extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write the dataset directory and its manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pitch = dataset.pitch
    written = {FRAMES_FILE: write_pga1(out_dir / FRAMES_FILE, dataset.frames, pitch)}
    if dataset.variance is not None:
        written[VARIANCE_FILE] = write_pga1(out_dir / VARIANCE_FILE, dataset.variance, pitch)
    if dataset.dark_mean is not None:
        written[DARK_MEAN_FILE] = write_pga1(out_dir / DARK_MEAN_FILE, dataset.dark_mean, pitch)
    if ground_truth is not None:
        written[OBJECT_FILE] = write_field(out_dir / OBJECT_FILE, ground_truth.obj)
        written[PROBE_FILE] = write_field(out_dir / PROBE_FILE, ground_truth.probe)
    written[POSITIONS_FILE] = write_positions_csv(out_dir / POSITIONS_FILE, dataset.pattern)

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "object_shape": list(dataset.object_shape),
        "offsets": [list(o) for o in dataset.offsets],
        "propagator": dataset.spec.model_dump(mode="json"),
        "metadata": dataset.metadata,
        "files": {name: sha256_file(path) for name, path in sorted(written.items())},
    }
    if extra:
        manifest.update(extra)
    path = write_json(out_dir / MANIFEST_NAME, manifest)
    logger.info(f"Saved dataset ({dataset.n_positions} frames) to {out_dir}")
    return path


def read_manifest(directory: Union[str, Path]) -> Dict[str, Any]:
    """Load manifest.json and check every listed file against its sha256."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"No {MANIFEST_NAME} in {directory}")
    manifest = read_json(manifest_path)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path} is not a {MANIFEST_FORMAT} manifest")
    for name, digest in manifest.get("files", {}).items():
        path = directory / name
        if not path.exists():
            raise FileNotFoundError(f"{path} is listed in the manifest but missing")
        actual = sha256_file(path)
        if actual != digest:
            raise FormatError(f"{path}: sha256 {actual} does not match manifest {digest}")
    return manifest


def load_dataset(directory: Union[str, Path]) -> DiffractionDataset:
    directory = Path(directory)
    manifest = read_manifest(directory)
    files = manifest["files"]
    spec = PropagatorSpec(**manifest["propagator"])
    frames, _ = read_pga1(directory / FRAMES_FILE)
    variance = read_pga1(directory / VARIANCE_FILE).data if VARIANCE_FILE in files else None
    dark_mean = read_pga1(directory / DARK_MEAN_FILE).data if DARK_MEAN_FILE in files else None
    object_shape = tuple(manifest["object_shape"])
    pattern = read_positions_csv(directory / POSITIONS_FILE)
    offsets = manifest.get("offsets")
    if offsets is None:
        offsets = to_pixel_offsets(pattern, spec.pitch_m, object_shape, spec.shape)
    dataset = DiffractionDataset(frames, offsets, object_shape, spec, variance=variance,
                                 dark_mean=dark_mean, pattern=pattern,
                                 metadata=manifest.get("metadata", {}))
    logger.info(f"Loaded dataset ({dataset.n_positions} frames) from {directory}")
    return dataset


def load_ground_truth(directory: Union[str, Path]) -> Optional[GroundTruth]:
    """Ground-truth object and probe, when the dataset was simulated."""
    directory = Path(directory)
    files = read_manifest(directory)["files"]
    if OBJECT_FILE not in files or PROBE_FILE not in files:
        return None
    return GroundTruth(read_field(directory / OBJECT_FILE), read_field(directory / PROBE_FILE))
