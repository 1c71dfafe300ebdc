"""Difficulty bucketing and 11-point interpolated average precision."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..geom3d import bev_array, bev_iou_rotated_matrix, boxes_to_array, iou_3d_rotated_matrix
from .io import DetectionFrame, KittiLabel

RECALL_POINTS = 11
DEFAULT_THRESHOLDS = (0.70, 0.75, 0.80)


class Difficulty(enum.IntEnum):
    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3

    @property
    def label(self) -> str:
        return {0: "Easy", 1: "Moderate", 2: "Hard", 3: "Ignored"}[int(self)]


# (min bbox height px, max occlusion level, max truncation) per level.
_LEVELS = (
    (Difficulty.EASY, 40.0, 0, 0.15),
    (Difficulty.MODERATE, 25.0, 1, 0.30),
    (Difficulty.HARD, 25.0, 2, 0.50),
)


def difficulty_of(label: KittiLabel) -> Difficulty:
    """Easiest benchmark level whose height/occlusion/truncation limits the label meets."""
    height = label.bbox_height
    for level, min_h, max_occ, max_trunc in _LEVELS:
        if height >= min_h and label.occlusion <= max_occ and label.truncation <= max_trunc:
            return level
    return Difficulty.IGNORED


class NoGroundTruthWarning(UserWarning):
    """AP requested for a category/difficulty with no evaluable ground truth."""


class Outcome(enum.IntEnum):
    TP = 0
    FP = 1
    IGNORED = 2


@dataclass(frozen=True)
class ScoredOutcome:
    score: float
    frame_id: str
    det_index: int
    outcome: Outcome


def _iou(metric: str, dets: np.ndarray, gts: np.ndarray) -> np.ndarray:
    if metric == "3d":
        return iou_3d_rotated_matrix(dets, gts)
    if metric == "bev":
        return bev_iou_rotated_matrix(bev_array(dets), bev_array(gts))
    raise ValueError(f"unknown metric {metric!r}; expected '3d' or 'bev'")


def match_frame(frame: DetectionFrame, category: str, iou_threshold: float, difficulty: Difficulty,
                metric: str = "3d") -> tuple[list[ScoredOutcome], int]:
    """Greedy score-ordered matching inside one frame.

    Each detection takes the highest-IoU unmatched evaluable ground truth with
    IoU >= threshold (true positive). Failing that, a detection overlapping an
    unmatched too-difficult ground truth of the same category is ignored.
    Otherwise it is a false positive. Returns the outcomes and the number of
    evaluable ground truths.
    """
    gt_idx = [i for i, (lab, _) in enumerate(frame.gts) if lab.category == category]
    valid = np.array([difficulty_of(frame.gts[i][0]) <= difficulty for i in gt_idx], dtype=bool)
    gt_boxes = boxes_to_array([frame.gts[i][1] for i in gt_idx])
    det_idx = [j for j, d in enumerate(frame.dets) if d.category == category]
    det_idx.sort(key=lambda j: (-frame.dets[j].score, j))
    det_boxes = boxes_to_array([frame.dets[j].box for j in det_idx])
    iou = _iou(metric, det_boxes, gt_boxes)

    taken = np.zeros(len(gt_idx), dtype=bool)
    out = []
    for row, j in enumerate(det_idx):
        ok = iou[row] >= iou_threshold if len(gt_idx) else np.zeros(0, bool)
        cand = np.flatnonzero(ok & valid & ~taken)
        if len(cand):
            best = cand[np.argmax(iou[row, cand])]
            taken[best] = True
            outcome = Outcome.TP
        else:
            ign = np.flatnonzero(ok & ~valid & ~taken)
            if len(ign):
                taken[ign[np.argmax(iou[row, ign])]] = True
                outcome = Outcome.IGNORED
            else:
                outcome = Outcome.FP
        out.append(ScoredOutcome(frame.dets[j].score, frame.frame_id, j, outcome))
    return out, int(valid.sum())


def _ranked_hits(outcomes: Sequence[ScoredOutcome]) -> np.ndarray:
    ranked = sorted((o for o in outcomes if o.outcome != Outcome.IGNORED),
                    key=lambda o: (-o.score, o.frame_id, o.det_index))
    return np.array([o.outcome == Outcome.TP for o in ranked], dtype=bool)


def pr_curve(outcomes: Sequence[ScoredOutcome], num_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall after each non-ignored detection, highest score first."""
    hits = _ranked_hits(outcomes)
    tp = np.cumsum(hits, dtype=np.int64)
    prec = tp / np.arange(1, len(hits) + 1)
    recall = tp / num_gt if num_gt else np.zeros(len(hits))
    return prec, recall


def interpolated_ap(tp_counts: np.ndarray, det_counts: np.ndarray, num_gt: int) -> float:
    """Mean over recall levels 0, 0.1, ..., 1 of the best precision at recall >= level, x 100.

    Recall comparisons are done on integers (``10 * tp >= k * num_gt``) so no
    recall level is lost to rounding.
    """
    if num_gt == 0 or len(tp_counts) == 0:
        return 0.0
    prec = tp_counts / det_counts
    total = 0.0
    for k in range(RECALL_POINTS):
        reach = (RECALL_POINTS - 1) * tp_counts >= k * num_gt
        if reach.any():
            total += prec[reach].max()
    return 100.0 * total / RECALL_POINTS


def ap_11(frames: Sequence[DetectionFrame], category: str, iou_threshold: float,
          difficulty: Difficulty = Difficulty.MODERATE, metric: str = "3d") -> float:
    """AP (percent) over pooled detections at 11 recall positions.

    A category/difficulty without evaluable ground truth scores 0.0 and emits
    :class:`NoGroundTruthWarning`.
    """
    return evaluate(frames, category, iou_threshold, difficulty, metric).ap


@dataclass(frozen=True)
class APResult:
    ap: float
    num_gt: int
    num_tp: int
    num_fp: int

    @property
    def no_gt(self) -> bool:
        return self.num_gt == 0


def evaluate(frames: Sequence[DetectionFrame], category: str, iou_threshold: float,
             difficulty: Difficulty = Difficulty.MODERATE, metric: str = "3d") -> APResult:
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"IoU threshold must lie in (0, 1], got {iou_threshold}")
    if difficulty == Difficulty.IGNORED:
        raise ValueError("cannot evaluate the Ignored bucket")
    outcomes: list[ScoredOutcome] = []
    num_gt = 0
    for fr in frames:
        o, n = match_frame(fr, category, iou_threshold, difficulty, metric)
        outcomes.extend(o)
        num_gt += n
    is_tp = _ranked_hits(outcomes)
    tp = np.cumsum(is_tp, dtype=np.int64)
    n_det = np.arange(1, len(is_tp) + 1)
    if num_gt == 0:
        warnings.warn(f"no evaluable {category!r} ground truth at {difficulty.label}; AP set to 0",
                      NoGroundTruthWarning, stacklevel=2)
    ap = interpolated_ap(tp, n_det, num_gt)
    n_tp = int(is_tp.sum())
    return APResult(ap, num_gt, n_tp, len(is_tp) - n_tp)
