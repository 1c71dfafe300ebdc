"""Rotated RoIAlign over a BEV feature grid.

Cell ``(i, j)`` of a grid holds the value at the cell center
``x = origin_x + (j + 0.5) * cell``, ``y = origin_y + (i + 0.5) * cell``: rows
run along y and columns along x. Reads outside the grid are zero.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom3d import BevBox, DomainError

DEFAULT_POOL_SIZE = 7

_MAGIC = b"FGRD"
_HEADER = struct.Struct("<4sIIIIddd")
_VERSION = 1


@dataclass(frozen=True)
class FeatureGrid:
    values: np.ndarray  # (H, W, C)
    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 1.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 2:
            vals = vals[..., None]
        if vals.ndim != 3:
            raise DomainError(f"feature grid must be (H, W, C), got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("feature grid has non-finite values")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise DomainError(f"cell size must be positive, got {self.cell_size}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + (j + 0.5) * self.cell_size, self.origin[1] + (i + 0.5) * self.cell_size)


def bilinear(grid: FeatureGrid, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``grid`` at metric points ``(x, y)``; returns ``x.shape + (C,)``."""
    col = (np.asarray(x, dtype=np.float64) - grid.origin[0]) / grid.cell_size - 0.5
    row = (np.asarray(y, dtype=np.float64) - grid.origin[1]) / grid.cell_size - 0.5
    c0 = np.floor(col).astype(np.int64)
    r0 = np.floor(row).astype(np.int64)
    fc = col - c0
    fr = row - r0
    out = np.zeros(col.shape + (grid.channels,))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            r = r0 + dr
            c = c0 + dc
            ok = (r >= 0) & (r < grid.height) & (c >= 0) & (c < grid.width)
            vals = grid.values[np.where(ok, r, 0), np.where(ok, c, 0)]
            out += np.where(ok, wr * wc, 0.0)[..., None] * vals
    return out


def roi_sample_points(box: BevBox, size: int = DEFAULT_POOL_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Metric bin centers of an ``size x size`` RoI, each of shape ``(size, size)``.

    Patch rows step across the box width (local y), columns along its length
    (local x), so a yaw-0 box samples in the grid's own row/column order.
    """
    if size < 1:
        raise DomainError(f"pool size must be >= 1, got {size}")
    k = (np.arange(size) + 0.5) / size - 0.5
    ly, lx = np.meshgrid(k * box.w, k * box.l, indexing="ij")
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    return box.cx + lx * c - ly * s, box.cy + lx * s + ly * c


def rotated_roi_align(grid: FeatureGrid, box: BevBox, size: int = DEFAULT_POOL_SIZE) -> np.ndarray:
    """``size x size x C`` patch, one bilinear sample per bin center."""
    x, y = roi_sample_points(box, size)
    return bilinear(grid, x, y)


def write_feature_grid(path, grid: FeatureGrid) -> None:
    """Binary layout: ``FGRD``, version, H, W, C (uint32), origin x/y and cell size
    (float64), then ``H*W*C`` little-endian float64 values in row-major order."""
    header = _HEADER.pack(_MAGIC, _VERSION, grid.height, grid.width, grid.channels,
                          grid.origin[0], grid.origin[1], grid.cell_size)
    Path(path).write_bytes(header + np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_feature_grid(path) -> FeatureGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DomainError(f"{path}: truncated feature grid header")
    magic, version, h, w, c, ox, oy, cell = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise DomainError(f"{path}: not a feature grid file (magic={magic!r}, version={version})")
    body = data[_HEADER.size:]
    if len(body) != 8 * h * w * c:
        raise DomainError(f"{path}: expected {8 * h * w * c} value bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<f8").reshape(h, w, c).astype(np.float64)
    return FeatureGrid(vals, (ox, oy), cell)
