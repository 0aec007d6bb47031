"""Fermat-spiral scan patterns, overlap targeting and travel ordering."""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ptychomix.exceptions import ArgumentError
from ptychomix.field import Pixel, check_region

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True, eq=False)
class ScanPattern:
    """Ordered (x, y) positions in meters relative to the object center."""
    positions: np.ndarray
    probe_radius: float = 0.0
    target_overlap: float = 0.0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)

    def __len__(self):
        return len(self.positions)


def fermat_spiral(n_points: int, scale: float, probe_radius: float = 0.0,
                  target_overlap: float = 0.0) -> ScanPattern:
    """r_i = scale * sqrt(i), theta_i = i * golden angle."""
    if n_points < 1:
        raise ArgumentError(f"n_points must be >= 1, got {n_points}")
    i = np.arange(n_points, dtype=np.float64)
    r = scale * np.sqrt(i)
    theta = i * GOLDEN_ANGLE
    return ScanPattern(np.column_stack((r * np.cos(theta), r * np.sin(theta))),
                       probe_radius, target_overlap)


def mean_nearest_neighbor_distance(positions: np.ndarray) -> float:
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) < 2:
        raise ArgumentError("Nearest-neighbor distance needs at least 2 positions")
    distances, _ = cKDTree(positions).query(positions, k=2)
    return float(distances[:, 1].mean())


def linear_overlap(positions: np.ndarray, probe_radius: float) -> float:
    """1 - (mean nearest-neighbor distance) / (probe diameter)."""
    return 1.0 - mean_nearest_neighbor_distance(positions) / (2.0 * probe_radius)


def scale_for_overlap(probe_radius: float, target_overlap: float, n_points: int) -> float:
    """Spiral scale giving the requested mean linear overlap."""
    if not 0.0 <= target_overlap < 1.0:
        raise ArgumentError(f"target_overlap must lie in [0, 1), got {target_overlap}")
    if not probe_radius > 0:
        raise ArgumentError(f"probe_radius must be > 0, got {probe_radius}")
    if n_points < 2:
        raise ArgumentError("Overlap is undefined for fewer than 2 positions")

    # nearest-neighbor distances are linear in the spiral scale
    unit = mean_nearest_neighbor_distance(fermat_spiral(n_points, 1.0).positions)
    scale = 2.0 * probe_radius * (1.0 - target_overlap) / unit
    logger.debug(f"Spiral scale {scale:.6g} m for overlap {target_overlap} ({n_points} points)")
    return float(scale)


def path_length(positions: np.ndarray) -> float:
    """Open-path travel distance in the given order."""
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(positions, axis=0), axis=1)))


def _nearest_neighbor_order(dist: np.ndarray) -> List[int]:
    n = len(dist)
    visited = np.zeros(n, dtype=bool)
    order = [0]
    visited[0] = True
    for _ in range(n - 1):
        candidates = np.where(visited, np.inf, dist[order[-1]])
        nxt = int(np.argmin(candidates))
        order.append(nxt)
        visited[nxt] = True
    return order


def _two_opt(order: List[int], dist: np.ndarray) -> List[int]:
    """2-opt refinement of an open path; never lengthens it."""
    route = np.array(order)
    n = len(route)
    if n < 4:
        return list(route)
    for _ in range(n * n):
        improved = False
        for i in range(1, n - 1):
            a, b = route[i - 1], route[i]
            j = np.arange(i + 1, n)
            c = route[j]
            # The edge after j is absent when j is the last stop.
            d_next = np.where(j + 1 < n, route[np.minimum(j + 1, n - 1)], -1)
            old = dist[a, b] + np.where(d_next >= 0, dist[c, np.maximum(d_next, 0)], 0.0)
            new = dist[a, c] + np.where(d_next >= 0, dist[b, np.maximum(d_next, 0)], 0.0)
            gain = old - new
            best = int(np.argmax(gain))
            if gain[best] > 1e-12:
                k = int(j[best])
                route[i:k + 1] = route[i:k + 1][::-1]
                improved = True
        if not improved:
            break
    return list(route)


def order_tsp(pattern: ScanPattern) -> ScanPattern:
    """Reorder positions to shorten total travel (nearest neighbor + 2-opt)."""
    positions = pattern.positions
    n = len(positions)
    if n <= 3:
        return pattern
    dist = cdist(positions, positions)
    candidates = [
        _two_opt(_nearest_neighbor_order(dist), dist),
        _two_opt(list(range(n)), dist),
    ]
    lengths = [path_length(positions[c]) for c in candidates]
    best = candidates[int(np.argmin(lengths))]
    logger.debug(
        f"Scan path length {path_length(positions):.4g} m -> {min(lengths):.4g} m"
    )
    return replace(pattern, positions=positions[best])


def to_pixel_offsets(pattern: ScanPattern, pitch: float, object_shape: Tuple[int, int],
                     probe_shape: Tuple[int, int]) -> List[Pixel]:
    """Snap metre positions to integer top-left probe-window offsets (row, column)."""
    offsets = []
    for x, y in pattern.positions:
        row = int(round(object_shape[0] / 2.0 + y / pitch - probe_shape[0] / 2.0))
        col = int(round(object_shape[1] / 2.0 + x / pitch - probe_shape[1] / 2.0))
        check_region(object_shape, (row, col), probe_shape)
        offsets.append((row, col))
    return offsets


def pattern_from_offsets(offsets: Sequence[Pixel], pitch: float, object_shape: Tuple[int, int],
                         probe_shape: Tuple[int, int]) -> ScanPattern:
    """Inverse of to_pixel_offsets for already-snapped positions."""
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)
    y = (offsets[:, 0] + probe_shape[0] / 2.0 - object_shape[0] / 2.0) * pitch
    x = (offsets[:, 1] + probe_shape[1] / 2.0 - object_shape[1] / 2.0) * pitch
    return ScanPattern(np.column_stack((x, y)))
