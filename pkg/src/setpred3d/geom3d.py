"""Oriented box types and the IoU family.

Conventions used throughout the package:

* ``l`` (length) spans the box's local x axis, i.e. the heading direction.
* ``w`` (width) spans the local y axis (lateral).
* ``h`` (height) spans z, and ``cz`` is the geometric center, not the bottom.
* ``yaw`` is a counter-clockwise rotation about +z, stored unnormalized.

Scalar functions work on :class:`Box3D` / :class:`BevBox`. The ``*_batch`` and
``*_matrix`` variants take ``(N, 7)`` / ``(N, 5)`` float arrays laid out as
``(cx, cy, cz, w, l, h, yaw)`` / ``(cx, cy, w, l, yaw)`` and are the fast path
for evaluation and benchmarking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

HALF_PI = 0.5 * math.pi

Point2D = tuple[float, float]
# Counter-clockwise vertex list. Every polygon built here is convex.
Polygon2D = list[Point2D]


class DomainError(ValueError):
    """Raised when a box or parameter lies outside its valid domain."""


@dataclass(frozen=True)
class Box3D:
    cx: float
    cy: float
    cz: float
    w: float
    l: float
    h: float
    yaw: float

    def __post_init__(self):
        for name in ('cx', 'cy', 'cz', 'w', 'l', 'h', 'yaw'):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.cx, self.cy, self.cz, self.w, self.l, self.h, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite box field in {vals}")
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise DomainError(f"box dimensions must be positive, got w={self.w} l={self.l} h={self.h}")

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "Box3D":
        return cls(*(float(v) for v in arr[:7]))

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz, self.w, self.l, self.h, self.yaw])

    @property
    def center(self) -> tuple[float, float, float]:
        return (self.cx, self.cy, self.cz)

    @property
    def volume(self) -> float:
        return self.w * self.l * self.h

    def replace(self, **changes) -> "Box3D":
        fields = dict(cx=self.cx, cy=self.cy, cz=self.cz, w=self.w, l=self.l, h=self.h, yaw=self.yaw)
        fields.update(changes)
        return Box3D(**fields)


@dataclass(frozen=True)
class BevBox:
    cx: float
    cy: float
    w: float
    l: float
    yaw: float

    def __post_init__(self):
        for name in ('cx', 'cy', 'w', 'l', 'yaw'):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.cx, self.cy, self.w, self.l, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite box field in {vals}")
        if not (self.w > 0 and self.l > 0):
            raise DomainError(f"box dimensions must be positive, got w={self.w} l={self.l}")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.l, self.yaw])

    @property
    def area(self) -> float:
        return self.w * self.l


@dataclass(frozen=True)
class Extent:
    """Axis-aligned point-cloud range ``[min, max)`` per axis, in meters."""

    x_min: float
    y_min: float
    z_min: float
    x_max: float
    y_max: float
    z_max: float

    def __post_init__(self):
        for lo, hi, ax in zip(self.mins, self.maxs, "xyz"):
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise DomainError(f"invalid {ax} range [{lo}, {hi}]")

    @classmethod
    def from_sequence(cls, vals: Sequence[float]) -> "Extent":
        """Build from ``(x_min, y_min, z_min, x_max, y_max, z_max)``."""
        if len(vals) != 6:
            raise DomainError(f"extent needs 6 values, got {len(vals)}")
        return cls(*(float(v) for v in vals))

    @property
    def mins(self) -> tuple[float, float, float]:
        return (self.x_min, self.y_min, self.z_min)

    @property
    def maxs(self) -> tuple[float, float, float]:
        return (self.x_max, self.y_max, self.z_max)

    @property
    def spans(self) -> tuple[float, float, float]:
        return (self.x_max - self.x_min, self.y_max - self.y_min, self.z_max - self.z_min)

    @property
    def centroid(self) -> tuple[float, float, float]:
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.mins, self.maxs))

    def as_tuple(self) -> tuple[float, ...]:
        return self.mins + self.maxs


KITTI_EXTENT = Extent(0.0, -40.0, -3.0, 70.4, 40.0, 1.0)


# ---------------------------------------------------------------------------
# Projections

def to_bev(b: Box3D) -> BevBox:
    return BevBox(b.cx, b.cy, b.w, b.l, b.yaw)


def axis_align(b: BevBox) -> BevBox:
    """Snap ``b`` to the nearest multiple of pi/2 and return the equivalent yaw-0 box.

    Exact ties (yaw = pi/4 + k*pi/2) snap to the lower multiple. When the
    snapped angle is an odd multiple of pi/2 the footprint is rotated a quarter
    turn, so ``w`` and ``l`` trade places.
    """
    k = math.ceil(b.yaw / HALF_PI - 0.5)
    if k % 2:
        return BevBox(b.cx, b.cy, b.l, b.w, 0.0)
    return BevBox(b.cx, b.cy, b.w, b.l, 0.0)


def bev_corners(b: BevBox) -> Polygon2D:
    """Corners of the oriented footprint, counter-clockwise."""
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    hl, hw = 0.5 * b.l, 0.5 * b.w
    out = []
    for lx, ly in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)):
        out.append((b.cx + lx * c - ly * s, b.cy + lx * s + ly * c))
    return out


def box_corners(b: Box3D) -> np.ndarray:
    """The 8 corners of ``b`` as an ``(8, 3)`` array; bottom face first."""
    xy = np.array(bev_corners(to_bev(b)))
    lo, hi = b.cz - 0.5 * b.h, b.cz + 0.5 * b.h
    return np.vstack([np.column_stack([xy, np.full(4, lo)]), np.column_stack([xy, np.full(4, hi)])])


# ---------------------------------------------------------------------------
# Polygon machinery

def polygon_area(poly: Polygon2D) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i - 1]
        x1, y1 = poly[i]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def clip_convex_polygon(subject: Polygon2D, clip: Polygon2D) -> Polygon2D:
    """Sutherland-Hodgman clip of ``subject`` against the convex CCW polygon ``clip``.

    Points lying on a clip edge count as inside, so touching polygons produce a
    degenerate (zero-area) result rather than an empty one.
    """
    out = list(subject)
    m = len(clip)
    for e in range(m):
        if not out:
            break
        ax, ay = clip[e]
        bx, by = clip[(e + 1) % m]
        ex, ey = bx - ax, by - ay
        src, out = out, []
        px, py = src[-1]
        dp = ex * (py - ay) - ey * (px - ax)
        for cx_, cy_ in src:
            dc = ex * (cy_ - ay) - ey * (cx_ - ax)
            if dc >= 0:
                if dp < 0:
                    t = dp / (dp - dc)
                    out.append((px + t * (cx_ - px), py + t * (cy_ - py)))
                out.append((cx_, cy_))
            elif dp >= 0:
                t = dp / (dp - dc)
                out.append((px + t * (cx_ - px), py + t * (cy_ - py)))
            px, py, dp = cx_, cy_, dc
    return out


def _bev_key(b: BevBox) -> tuple[float, ...]:
    return (b.cx, b.cy, b.w, b.l, b.yaw)


def bev_intersection_area(a: BevBox, b: BevBox) -> float:
    # Fixed argument order makes the result bit-for-bit symmetric.
    if _bev_key(b) < _bev_key(a):
        a, b = b, a
    return polygon_area(clip_convex_polygon(bev_corners(a), bev_corners(b)))


def _ratio(inter: float, area_a: float, area_b: float) -> float:
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


# ---------------------------------------------------------------------------
# IoU family

def bev_iou_axis_aligned(a: BevBox, b: BevBox) -> float:
    a, b = axis_align(a), axis_align(b)
    ix = min(a.cx + 0.5 * a.l, b.cx + 0.5 * b.l) - max(a.cx - 0.5 * a.l, b.cx - 0.5 * b.l)
    iy = min(a.cy + 0.5 * a.w, b.cy + 0.5 * b.w) - max(a.cy - 0.5 * a.w, b.cy - 0.5 * b.w)
    inter = max(ix, 0.0) * max(iy, 0.0)
    return _ratio(inter, a.area, b.area)


def bev_iou_rotated(a: BevBox, b: BevBox) -> float:
    return _ratio(bev_intersection_area(a, b), a.area, b.area)


def z_overlap(a: Box3D, b: Box3D) -> float:
    top = min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h)
    bottom = max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h)
    return max(top - bottom, 0.0)


def intersection_volume(a: Box3D, b: Box3D) -> float:
    dz = z_overlap(a, b)
    if dz == 0.0:
        return 0.0
    return bev_intersection_area(to_bev(a), to_bev(b)) * dz


def iou_3d_rotated(a: Box3D, b: Box3D) -> float:
    return _ratio(intersection_volume(a, b), a.volume, b.volume)


def diou_3d(pred: Box3D, gt: Box3D) -> float:
    """Rotated 3D DIoU loss: ``1 - IoU + rho^2 / c^2``.

    ``rho`` is the distance between centers and ``c`` the diagonal of the
    axis-aligned box enclosing all 16 corners of both boxes.
    """
    iou = iou_3d_rotated(pred, gt)
    corners = np.vstack([box_corners(pred), box_corners(gt)])
    diag = corners.max(axis=0) - corners.min(axis=0)
    c2 = float(diag @ diag)
    rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2 + (pred.cz - gt.cz) ** 2
    return 1.0 - iou + rho2 / c2


# ---------------------------------------------------------------------------
# Monte Carlo oracle

class MCEstimate(NamedTuple):
    iou: float
    stderr: float
    n_union: int
    n_samples: int


def _inside(pts: np.ndarray, b: Box3D) -> np.ndarray:
    dx = pts[:, 0] - b.cx
    dy = pts[:, 1] - b.cy
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= 0.5 * b.l) & (np.abs(v) <= 0.5 * b.w) & (np.abs(pts[:, 2] - b.cz) <= 0.5 * b.h)


def mc_iou_oracle(a: Box3D, b: Box3D, n_samples: int = 2_000_000, seed: int = 0,
                  chunk: int = 500_000) -> MCEstimate:
    """Estimate the volume IoU of ``a`` and ``b`` by uniform rejection sampling.

    Samples are drawn over the axis-aligned region enclosing both boxes; the
    estimate is ``#in both / #in either``. ``stderr`` is the binomial standard
    error ``sqrt(p (1 - p) / n_union)``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    corners = np.vstack([box_corners(a), box_corners(b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    n_both = n_union = 0
    left = n_samples
    while left > 0:
        k = min(chunk, left)
        pts = lo + rng.random((k, 3)) * (hi - lo)
        ia, ib = _inside(pts, a), _inside(pts, b)
        n_both += int(np.count_nonzero(ia & ib))
        n_union += int(np.count_nonzero(ia | ib))
        left -= k
    if n_union == 0:
        return MCEstimate(0.0, 0.0, 0, n_samples)
    p = n_both / n_union
    return MCEstimate(p, math.sqrt(p * (1.0 - p) / n_union), n_union, n_samples)


# ---------------------------------------------------------------------------
# Vectorized kernels

def bev_corners_batch(boxes: np.ndarray) -> np.ndarray:
    """``(N, 5)`` BEV boxes -> ``(N, 4, 2)`` CCW corners."""
    boxes = np.asarray(boxes, dtype=np.float64)
    c, s = np.cos(boxes[:, 4]), np.sin(boxes[:, 4])
    hl, hw = 0.5 * boxes[:, 3], 0.5 * boxes[:, 2]
    lx = np.stack([-hl, hl, hl, -hl], axis=1)
    ly = np.stack([-hw, -hw, hw, hw], axis=1)
    x = boxes[:, :1] + lx * c[:, None] - ly * s[:, None]
    y = boxes[:, 1:2] + lx * s[:, None] + ly * c[:, None]
    return np.stack([x, y], axis=2)


_MAX_VERTS = 8


def _polygon_area_batch(poly: np.ndarray, n: np.ndarray) -> np.ndarray:
    k = poly.shape[1]
    idx = np.arange(k)[None, :]
    valid = idx < n[:, None]
    nxt = np.where(idx + 1 < n[:, None], idx + 1, 0)
    q = np.take_along_axis(poly, nxt[..., None], axis=1)
    cross = poly[..., 0] * q[..., 1] - q[..., 0] * poly[..., 1]
    area = 0.5 * np.abs(np.where(valid, cross, 0.0).sum(axis=1))
    return np.where(n >= 3, area, 0.0)


def _clip_batch(subject: np.ndarray, clip: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Sutherland-Hodgman over paired quads; same rules as the scalar path."""
    b = subject.shape[0]
    poly = subject
    n = np.full(b, subject.shape[1], dtype=np.int64)
    rows = np.arange(b)[:, None]
    for e in range(clip.shape[1]):
        a0 = clip[:, e]
        ed = clip[:, (e + 1) % clip.shape[1]] - a0
        k = poly.shape[1]
        idx = np.arange(k)[None, :]
        valid = idx < n[:, None]
        rel = poly - a0[:, None, :]
        d = ed[:, None, 0] * rel[..., 1] - ed[:, None, 1] * rel[..., 0]
        prev = np.where(idx == 0, n[:, None] - 1, idx - 1)
        prev = np.maximum(prev, 0)
        pp = poly[rows, prev]
        dp = d[rows, prev]
        cin = d >= 0
        pin = dp >= 0
        crossing = valid & (cin != pin)
        denom = np.where(crossing, dp - d, 1.0)
        t = np.where(crossing, dp / denom, 0.0)
        ipt = pp + t[..., None] * (poly - pp)
        keep = valid & cin
        cand = np.stack([ipt, poly], axis=2).reshape(b, 2 * k, 2)
        mask = np.stack([crossing, keep], axis=2).reshape(b, 2 * k)
        pos = np.cumsum(mask, axis=1) - 1
        mask &= pos < _MAX_VERTS
        r, c = np.nonzero(mask)
        poly = np.zeros((b, _MAX_VERTS, 2))
        poly[r, pos[r, c]] = cand[r, c]
        n = mask.sum(axis=1)
    return poly, n


def _canonical_pairs(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lt = np.zeros(len(a), dtype=bool)
    eq = np.ones(len(a), dtype=bool)
    for k in range(a.shape[1]):
        lt |= eq & (b[:, k] < a[:, k])
        eq &= a[:, k] == b[:, k]
    swap = lt[:, None]
    return np.where(swap, b, a), np.where(swap, a, b)


_CHUNK = 1 << 16


def bev_intersection_area_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = _canonical_pairs(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    out = np.empty(len(a))
    for s in range(0, len(a), _CHUNK):
        poly, n = _clip_batch(bev_corners_batch(a[s:s + _CHUNK]), bev_corners_batch(b[s:s + _CHUNK]))
        out[s:s + _CHUNK] = _polygon_area_batch(poly, n)
    return out


def _ratio_batch(inter, area_a, area_b):
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.clip(r, 0.0, 1.0)


def bev_iou_rotated_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise rotated BEV IoU of two ``(B, 5)`` arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 5)
    inter = bev_intersection_area_batch(a, b)
    return _ratio_batch(inter, a[:, 2] * a[:, 3], b[:, 2] * b[:, 3])


def iou_3d_rotated_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise rotated 3D IoU of two ``(B, 7)`` arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 7)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 7)
    top = np.minimum(a[:, 2] + 0.5 * a[:, 5], b[:, 2] + 0.5 * b[:, 5])
    bottom = np.maximum(a[:, 2] - 0.5 * a[:, 5], b[:, 2] - 0.5 * b[:, 5])
    dz = np.maximum(top - bottom, 0.0)
    bev = [0, 1, 3, 4, 6]
    inter = bev_intersection_area_batch(a[:, bev], b[:, bev]) * dz
    vol_a = a[:, 3] * a[:, 4] * a[:, 5]
    vol_b = b[:, 3] * b[:, 4] * b[:, 5]
    return _ratio_batch(inter, vol_a, vol_b)


def _pairwise(fn, a: np.ndarray, b: np.ndarray, width: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, width)
    b = np.asarray(b, dtype=np.float64).reshape(-1, width)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ia = np.repeat(np.arange(len(a)), len(b))
    ib = np.tile(np.arange(len(b)), len(a))
    return fn(a[ia], b[ib]).reshape(len(a), len(b))


def bev_iou_rotated_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs rotated BEV IoU, shape ``(len(a), len(b))``."""
    return _pairwise(bev_iou_rotated_batch, a, b, 5)


def iou_3d_rotated_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs rotated 3D IoU, shape ``(len(a), len(b))``."""
    return _pairwise(iou_3d_rotated_batch, a, b, 7)


def boxes_to_array(boxes: Sequence[Box3D]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 7))
    return np.array([[b.cx, b.cy, b.cz, b.w, b.l, b.h, b.yaw] for b in boxes], dtype=np.float64)


def bev_array(boxes3d: np.ndarray) -> np.ndarray:
    """Drop ``cz`` and ``h`` from an ``(N, 7)`` array."""
    return np.asarray(boxes3d, dtype=np.float64).reshape(-1, 7)[:, [0, 1, 3, 4, 6]]
