"""Bipartite matching of predictions to ground truth.

The pairwise cost is a weighted sum of a signed focal classification cost, an
L1 box term (normalized center/size differences plus a sine-error heading
term), and ``1 - IoU`` of the yaw-snapped BEV footprints. The optimal
injective assignment is found with a rectangular Kuhn-Munkres solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geom3d import Box3D, DomainError, Extent, KITTI_EXTENT, bev_iou_axis_aligned, to_bev

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
PROB_EPS = 1e-8


@dataclass(frozen=True)
class MatchWeights:
    cls: float = 2.0
    l1: float = 5.0
    iou: float = 2.0

    def scaled(self, k: float) -> "MatchWeights":
        return MatchWeights(self.cls * k, self.l1 * k, self.iou * k)


DEFAULT_WEIGHTS = MatchWeights()


@dataclass(frozen=True)
class Prediction:
    box: Box3D
    class_probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.class_probs)
        if not all(math.isfinite(p) and 0.0 <= p <= 1.0 for p in probs):
            raise DomainError(f"class probabilities must lie in [0, 1], got {probs}")
        object.__setattr__(self, "class_probs", probs)


@dataclass(frozen=True)
class GroundTruth:
    box: Box3D
    label: int

    def __post_init__(self):
        if self.label < 0:
            raise DomainError(f"label must be a non-negative category index, got {self.label}")


def clamp_prob(p: float) -> float:
    return min(max(p, PROB_EPS), 1.0 - PROB_EPS)


def focal_pos(p: float, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> float:
    """Focal loss for a positive target: ``alpha (1-p)^gamma (-log p)``."""
    p = clamp_prob(p)
    return alpha * (1.0 - p) ** gamma * -math.log(p)


def focal_neg(p: float, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> float:
    """Focal loss for a negative target: ``(1-alpha) p^gamma (-log(1-p))``."""
    p = clamp_prob(p)
    return (1.0 - alpha) * p ** gamma * -math.log(1.0 - p)


def focal_cls_cost(probs: Sequence[float], label: int, alpha: float = FOCAL_ALPHA,
                   gamma: float = FOCAL_GAMMA) -> float:
    """Signed focal matching cost of the target-class probability.

    The negative-target term is subtracted so that a confident correct
    prediction gets a lower (possibly negative) cost.
    """
    if not 0 <= label < len(probs):
        raise DomainError(f"label {label} out of range for {len(probs)} classes")
    p = probs[label]
    return focal_pos(p, alpha, gamma) - focal_neg(p, alpha, gamma)


def smooth_l1(x: float, beta: float = 1.0) -> float:
    ax = abs(x)
    if ax <= beta:
        return 0.5 * x * x / beta
    return ax - 0.5 * beta


def sin_error(theta_p: float, theta_g: float) -> float:
    """Smooth-L1 of ``sin(theta_p - theta_g)``; zero for headings differing by pi."""
    return smooth_l1(math.sin(theta_p - theta_g))


def l1_normalizers(extent: Extent | None) -> tuple[float, ...]:
    if extent is None:
        return (1.0,) * 6
    sx, sy, sz = extent.spans
    # w runs laterally (y), l along the heading (x); normalize each by its axis span.
    return (sx, sy, sz, sy, sx, sz)


def l1_box_cost(pred: Box3D, gt: Box3D, extent: Extent | None = KITTI_EXTENT) -> float:
    """Mean normalized |difference| of (cx, cy, cz, w, l, h) plus the sine-error term.

    ``extent=None`` switches the first part to raw meters.
    """
    norms = l1_normalizers(extent)
    p = (pred.cx, pred.cy, pred.cz, pred.w, pred.l, pred.h)
    g = (gt.cx, gt.cy, gt.cz, gt.w, gt.l, gt.h)
    other = sum(abs(a - b) / n for a, b, n in zip(p, g, norms)) / 6.0
    return other + sin_error(pred.yaw, gt.yaw)


def pair_cost(pred: Prediction, gt: GroundTruth, weights: MatchWeights = DEFAULT_WEIGHTS,
              extent: Extent | None = KITTI_EXTENT) -> float:
    return (weights.cls * focal_cls_cost(pred.class_probs, gt.label)
            + weights.l1 * l1_box_cost(pred.box, gt.box, extent)
            + weights.iou * (1.0 - bev_iou_axis_aligned(to_bev(pred.box), to_bev(gt.box))))


def match_cost_matrix(preds: Sequence[Prediction], gts: Sequence[GroundTruth],
                      weights: MatchWeights = DEFAULT_WEIGHTS,
                      extent: Extent | None = KITTI_EXTENT) -> np.ndarray:
    """``(M, N)`` cost matrix, rows are ground truths and columns predictions."""
    n, m = len(preds), len(gts)
    if n < m:
        raise DomainError(f"need at least as many predictions as ground truths (N={n} < M={m})")
    costs = np.empty((m, n))
    for i, gt in enumerate(gts):
        for j, pred in enumerate(preds):
            costs[i, j] = pair_cost(pred, gt, weights, extent)
    return costs


@dataclass(frozen=True)
class Assignment:
    """Injective map from ground-truth rows to prediction columns."""

    cols: tuple[int, ...]
    cost: float

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.cols))


def hungarian(costs) -> Assignment:
    """Minimum-cost assignment of every row to a distinct column (rows <= cols).

    Shortest augmenting paths with dual potentials, O(M^2 N). Among equally
    cheap candidate columns the lowest index is taken at every step, which
    makes the result deterministic.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2:
        raise DomainError(f"cost matrix must be 2-D, got shape {c.shape}")
    m, n = c.shape
    if m > n:
        raise DomainError(f"more rows than columns ({m} > {n})")
    if not np.all(np.isfinite(c)):
        raise DomainError("cost matrix has non-finite entries")
    if m == 0:
        return Assignment((), 0.0)

    # 1-based with a virtual column 0, as in the classic potentials formulation.
    u = np.zeros(m + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, m + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while True:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
            if j0 == 0:
                break

    cols = [0] * m
    for j in range(1, n + 1):
        if owner[j]:
            cols[owner[j] - 1] = j - 1
    return Assignment(tuple(cols), assignment_cost(c, cols))


def assignment_cost(costs, cols: Sequence[int]) -> float:
    """Correctly rounded total, so equal assignments give bit-equal costs in any order."""
    c = np.asarray(costs, dtype=np.float64)
    return math.fsum(c[np.arange(len(cols)), list(cols)]) if len(cols) else 0.0


@dataclass(frozen=True)
class MatchResult:
    pairs: list[tuple[int, int]]
    unmatched: list[int]
    costs: np.ndarray
    cost: float


def match(preds: Sequence[Prediction], gts: Sequence[GroundTruth],
          weights: MatchWeights = DEFAULT_WEIGHTS, extent: Extent | None = KITTI_EXTENT) -> MatchResult:
    costs = match_cost_matrix(preds, gts, weights, extent)
    a = hungarian(costs)
    taken = set(a.cols)
    return MatchResult(a.pairs, [j for j in range(len(preds)) if j not in taken], costs, a.cost)
