"""Residual encoding of boxes against proposals, and proposal initialization.

Center offsets are scaled by the proposal's BEV diagonal (x, y) or height (z),
sizes are log-ratios, and the heading residual is a plain difference. The
heading is deliberately left unwrapped; periodicity is the loss's job.
"""
from __future__ import annotations

import math
from typing import NamedTuple

from .geom3d import Box3D, DomainError, Extent, KITTI_EXTENT

DEFAULT_NUM_PROPOSALS = 100


class Residual7(NamedTuple):
    dx: float
    dy: float
    dz: float
    dw: float
    dl: float
    dh: float
    dtheta: float


def _check_dims(b: Box3D, what: str) -> None:
    if not (b.w > 0 and b.l > 0 and b.h > 0):
        raise DomainError(f"{what} dimensions must be positive: w={b.w} l={b.l} h={b.h}")


def encode(gt: Box3D, proposal: Box3D) -> Residual7:
    _check_dims(proposal, "proposal")
    _check_dims(gt, "ground-truth")
    diag = math.hypot(proposal.w, proposal.l)
    return Residual7(
        (gt.cx - proposal.cx) / diag,
        (gt.cy - proposal.cy) / diag,
        (gt.cz - proposal.cz) / proposal.h,
        math.log(gt.w / proposal.w),
        math.log(gt.l / proposal.l),
        math.log(gt.h / proposal.h),
        gt.yaw - proposal.yaw,
    )


def decode(r: Residual7, proposal: Box3D) -> Box3D:
    _check_dims(proposal, "proposal")
    if not all(math.isfinite(v) for v in r):
        raise DomainError(f"non-finite residual {tuple(r)}")
    diag = math.hypot(proposal.w, proposal.l)
    return Box3D(
        proposal.cx + r.dx * diag,
        proposal.cy + r.dy * diag,
        proposal.cz + r.dz * proposal.h,
        proposal.w * math.exp(r.dw),
        proposal.l * math.exp(r.dl),
        proposal.h * math.exp(r.dh),
        proposal.yaw + r.dtheta,
    )


def init_proposals(extent: Extent = KITTI_EXTENT, n: int = DEFAULT_NUM_PROPOSALS) -> list[Box3D]:
    """``n`` copies of the whole-scene box: centered on the extent, yaw 0.

    With yaw 0 the length runs along x and the width along y, so
    ``l = x span``, ``w = y span`` and ``h = z span``.
    """
    if n < 1:
        raise DomainError(f"need at least one proposal, got {n}")
    sx, sy, sz = extent.spans
    cx, cy, cz = extent.centroid
    box = Box3D(cx, cy, cz, sy, sx, sz, 0.0)
    return [box] * n
