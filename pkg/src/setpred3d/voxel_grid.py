"""Point-cloud voxelization with a per-voxel point cap and mean encoding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterator

import numpy as np

from .geom3d import DomainError, Extent, KITTI_EXTENT

KITTI_VOXEL_SIZE = (0.05, 0.05, 0.1)
DEFAULT_MAX_POINTS = 5


def _ceil_div(span_lo: float, span_hi: float, size: float) -> int:
    # Decimal on the shortest repr keeps 70.4 / 0.05 from landing on 1408.0000000000002.
    span = Decimal(repr(span_hi)) - Decimal(repr(span_lo))
    return int(math.ceil(span / Decimal(repr(size))))


@dataclass(frozen=True)
class VoxelGridSpec:
    extent: Extent = KITTI_EXTENT
    voxel_size: tuple[float, float, float] = KITTI_VOXEL_SIZE

    def __post_init__(self):
        if len(self.voxel_size) != 3 or not all(math.isfinite(v) and v > 0 for v in self.voxel_size):
            raise DomainError(f"voxel sizes must be positive, got {self.voxel_size}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return grid_dims(self)


def grid_dims(spec: VoxelGridSpec) -> tuple[int, int, int]:
    """Grid shape ``(Sx, Sy, Sz)``: per-axis ceiling of extent span over voxel size."""
    if not all(v > 0 for v in spec.voxel_size):
        raise DomainError(f"voxel sizes must be positive, got {spec.voxel_size}")
    return tuple(
        _ceil_div(lo, hi, d) for lo, hi, d in zip(spec.extent.mins, spec.extent.maxs, spec.voxel_size)
    )


@dataclass
class VoxelMap:
    """Sparse voxel -> retained points mapping.

    ``coords[k]`` is the ``(ix, iy, iz)`` index of the k-th non-empty voxel
    (sorted by ``ix``, then ``iy``, then ``iz``) and its points are
    ``points[offsets[k]:offsets[k + 1]]``.
    """

    spec: VoxelGridSpec
    max_points: int
    coords: np.ndarray
    offsets: np.ndarray
    points: np.ndarray
    n_input: int
    n_out_of_range: int
    n_capped: int
    _index: dict = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def n_retained(self) -> int:
        return len(self.points)

    def voxel_points(self, k: int) -> np.ndarray:
        return self.points[self.offsets[k]:self.offsets[k + 1]]

    def items(self) -> Iterator[tuple[tuple[int, int, int], np.ndarray]]:
        for k in range(len(self.coords)):
            yield tuple(int(v) for v in self.coords[k]), self.voxel_points(k)

    def __getitem__(self, ijk: tuple[int, int, int]) -> np.ndarray:
        if self._index is None:
            self._index = {tuple(int(v) for v in c): k for k, c in enumerate(self.coords)}
        return self.voxel_points(self._index[tuple(ijk)])

    def __contains__(self, ijk) -> bool:
        try:
            self[ijk]
        except KeyError:
            return False
        return True

    def voxel_bounds(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.spec.extent.mins) + self.coords[k] * np.array(self.spec.voxel_size)
        return lo, lo + np.array(self.spec.voxel_size)


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros((0, 4))
    if pts.ndim != 2 or pts.shape[1] < 3:
        raise DomainError(f"points must be (N, 3) or (N, 4), got shape {pts.shape}")
    if pts.shape[1] == 3:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    return pts[:, :4]


def assign_points(points, spec: VoxelGridSpec = VoxelGridSpec(), max_points: int = DEFAULT_MAX_POINTS,
                  seed: int = 0) -> VoxelMap:
    """Bin points into voxels, dropping out-of-range points first, then capping.

    Voxel intervals are half-open ``[lo, hi)``, so a point sitting exactly on
    the extent's max face is dropped. Voxels with more than ``max_points``
    points keep a uniform random subset chosen by a seeded partial
    Fisher-Yates shuffle; survivors keep their original relative order.
    """
    if max_points < 1:
        raise DomainError(f"max_points must be >= 1, got {max_points}")
    pts = _as_points(points)
    n_input = len(pts)
    lo = np.array(spec.extent.mins)
    hi = np.array(spec.extent.maxs)
    size = np.array(spec.voxel_size)
    dims = np.array(grid_dims(spec))

    inside = np.all((pts[:, :3] >= lo) & (pts[:, :3] < hi), axis=1) if n_input else np.zeros(0, bool)
    pts = pts[inside]
    idx = np.floor((pts[:, :3] - lo) / size).astype(np.int64)
    idx = np.clip(idx, 0, dims - 1)

    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    idx, pts = idx[order], pts[order]
    if len(idx):
        starts = np.flatnonzero(np.r_[True, np.any(idx[1:] != idx[:-1], axis=1)])
    else:
        starts = np.zeros(0, dtype=np.int64)
    counts = np.diff(np.r_[starts, len(idx)])

    rng = np.random.default_rng(seed)
    keep = np.ones(len(pts), dtype=bool)
    for s, c in zip(starts[counts > max_points], counts[counts > max_points]):
        perm = np.arange(c)
        for i in range(max_points):
            j = i + int(rng.integers(c - i))
            perm[i], perm[j] = perm[j], perm[i]
        drop = np.ones(c, dtype=bool)
        drop[perm[:max_points]] = False
        keep[s:s + c][drop] = False

    new_counts = np.minimum(counts, max_points)
    offsets = np.r_[0, np.cumsum(new_counts)].astype(np.int64)
    return VoxelMap(
        spec=spec,
        max_points=max_points,
        coords=idx[starts] if len(starts) else np.zeros((0, 3), dtype=np.int64),
        offsets=offsets,
        points=pts[keep],
        n_input=n_input,
        n_out_of_range=int(n_input - inside.sum()),
        n_capped=int((counts - new_counts).sum()),
    )


def mean_encode(vmap: VoxelMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel mean of the retained ``(x, y, z, intensity)`` records.

    Returns ``(coords, features)`` with one row per non-empty voxel.
    """
    if len(vmap) == 0:
        return np.zeros((0, 3), dtype=np.int64), np.zeros((0, 4))
    sums = np.add.reduceat(vmap.points, vmap.offsets[:-1], axis=0)
    counts = np.diff(vmap.offsets)[:, None]
    return vmap.coords.copy(), sums / counts
