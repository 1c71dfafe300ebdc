"""Training loss over matched pairs, with background supervision and deep supervision."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geom3d import Box3D, Extent, KITTI_EXTENT, diou_3d
from .set_matcher import (DEFAULT_WEIGHTS, GroundTruth, MatchResult, MatchWeights, Prediction,
                          l1_normalizers, focal_neg, focal_pos, l1_box_cost, match)


@dataclass(frozen=True)
class LossBreakdown:
    cls: float = 0.0
    l1: float = 0.0
    diou: float = 0.0
    total: float = 0.0

    @classmethod
    def weighted(cls, cls_term: float, l1: float, diou: float, weights: MatchWeights) -> "LossBreakdown":
        total = weights.cls * cls_term + weights.l1 * l1 + weights.iou * diou
        return cls(cls_term, l1, diou, total)

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(self.cls + other.cls, self.l1 + other.l1, self.diou + other.diou,
                             self.total + other.total)

    def scale(self, k: float) -> "LossBreakdown":
        return LossBreakdown(self.cls * k, self.l1 * k, self.diou * k, self.total * k)

    def as_dict(self) -> dict[str, float]:
        return {"cls": self.cls, "l1": self.l1, "diou": self.diou, "total": self.total}


@dataclass(frozen=True)
class StageOutput:
    predictions: tuple[Prediction, ...]
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "predictions", tuple(self.predictions))


def matched_pair_loss(pred: Prediction, gt: GroundTruth, weights: MatchWeights = DEFAULT_WEIGHTS,
                      extent: Extent | None = KITTI_EXTENT) -> LossBreakdown:
    cls_term = focal_pos(pred.class_probs[gt.label])
    return LossBreakdown.weighted(cls_term, l1_box_cost(pred.box, gt.box, extent),
                                  diou_3d(pred.box, gt.box), weights)


def background_loss(pred: Prediction, weights: MatchWeights = DEFAULT_WEIGHTS) -> LossBreakdown:
    """No-object supervision: every class probability is pushed toward 0."""
    cls_term = sum(focal_neg(p) for p in pred.class_probs)
    return LossBreakdown.weighted(cls_term, 0.0, 0.0, weights)


@dataclass
class FrameLoss:
    match: MatchResult
    pair_losses: list[LossBreakdown]
    background: list[LossBreakdown]
    normalizer: float
    raw: LossBreakdown = field(init=False)
    normalized: LossBreakdown = field(init=False)

    def __post_init__(self):
        raw = LossBreakdown()
        for item in self.pair_losses:
            raw = raw + item
        for item in self.background:
            raw = raw + item
        self.raw = raw
        self.normalized = raw.scale(1.0 / self.normalizer)


def frame_loss_detail(stage: StageOutput, gts: Sequence[GroundTruth],
                      weights: MatchWeights = DEFAULT_WEIGHTS, num_gts: int | None = None,
                      extent: Extent | None = KITTI_EXTENT) -> FrameLoss:
    """Match, sum pair losses and background terms, divide by ``max(1, num_gts)``.

    ``num_gts`` is the ground-truth count of the whole batch; it defaults to
    this frame's count.
    """
    res = match(stage.predictions, gts, weights, extent)
    preds = stage.predictions
    pair_losses = [matched_pair_loss(preds[j], gts[i], weights, extent) for i, j in res.pairs]
    background = [background_loss(preds[j], weights) for j in res.unmatched]
    denom = len(gts) if num_gts is None else num_gts
    return FrameLoss(res, pair_losses, background, float(max(1, denom)))


def frame_loss(stage: StageOutput, gts: Sequence[GroundTruth], weights: MatchWeights = DEFAULT_WEIGHTS,
               num_gts: int | None = None, extent: Extent | None = KITTI_EXTENT) -> LossBreakdown:
    return frame_loss_detail(stage, gts, weights, num_gts, extent).normalized


def batch_loss(frames: Sequence[tuple[StageOutput, Sequence[GroundTruth]]],
               weights: MatchWeights = DEFAULT_WEIGHTS,
               extent: Extent | None = KITTI_EXTENT) -> LossBreakdown:
    """Sum of per-frame losses, normalized by the batch-wide ground-truth count."""
    n = sum(len(g) for _, g in frames)
    out = LossBreakdown()
    for stage, gts in frames:
        out = out + frame_loss(stage, gts, weights, num_gts=n, extent=extent)
    return out


def stacked_loss(stages: Sequence[StageOutput], gts: Sequence[GroundTruth],
                 weights: MatchWeights = DEFAULT_WEIGHTS, num_gts: int | None = None,
                 extent: Extent | None = KITTI_EXTENT) -> LossBreakdown:
    """Deep supervision: every stage is matched on its own and the losses summed."""
    if not stages:
        raise ValueError("need at least one stage")
    out = LossBreakdown()
    for stage in stages:
        out = out + frame_loss(stage, gts, weights, num_gts, extent)
    return out


def l1_grad(pred: Box3D, gt: Box3D, extent: Extent | None = KITTI_EXTENT) -> np.ndarray:
    """Analytic gradient of :func:`l1_box_cost` w.r.t. ``(cx, cy, cz, w, l, h, yaw)`` of ``pred``.

    At ``pred == gt`` along an axis the subgradient 0 is returned.
    """
    norms = l1_normalizers(extent)
    p = (pred.cx, pred.cy, pred.cz, pred.w, pred.l, pred.h)
    g = (gt.cx, gt.cy, gt.cz, gt.w, gt.l, gt.h)
    grad = np.zeros(7)
    for k in range(6):
        grad[k] = np.sign(float(p[k]) - float(g[k])) / (6.0 * norms[k])
    s = math.sin(pred.yaw - gt.yaw)
    # |sin| <= 1 keeps smooth-L1 on its quadratic branch: d/dtheta 0.5 s^2 = s cos.
    grad[6] = s * math.cos(pred.yaw - gt.yaw)
    return grad
