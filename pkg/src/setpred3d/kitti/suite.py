"""Benchmark-table evaluation and the noise-robustness harness."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from ..geom3d import Box3D
from .ap import DEFAULT_THRESHOLDS, Difficulty, NoGroundTruthWarning, evaluate
from .io import DetectionFrame, DetectionResult
from .noise import DEFAULT_MARGIN, DEFAULT_NOISE_LEVELS, inject_noise

LEVELS = (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD)
METRICS = (("AP_3D", "3d"), ("AP_BEV", "bev"))

Detector = Callable[[DetectionFrame], list[DetectionResult]]


@dataclass
class EvalReport:
    records: list[dict] = field(default_factory=list)

    def get(self, **query) -> list[dict]:
        return [r for r in self.records if all(r.get(k) == v for k, v in query.items())]

    def value(self, **query) -> float:
        hits = self.get(**query)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} records match {query}")
        return hits[0]["ap"]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def to_table(self) -> str:
        lines = []
        for cat in dict.fromkeys(r["category"] for r in self.records):
            for noise in dict.fromkeys(r.get("noise") for r in self.records if r["category"] == cat):
                title = f"{cat} AP@11"
                if noise is not None:
                    title += f"  (+noise {noise})"
                lines.append(title)
                head = " | ".join(f"{m:<6} {'Easy':>7} {'Mod.':>7} {'Hard':>7} {'mAP':>7}" for m, _ in METRICS)
                lines.append(f"{'IoU':<5} | {head}")
                thresholds = dict.fromkeys(r["threshold"] for r in self.records
                                           if r["category"] == cat and r.get("noise") == noise)
                for t in thresholds:
                    cells = []
                    for name, _ in METRICS:
                        vals = [self.value(category=cat, noise=noise, threshold=t, metric=name, difficulty=d)
                                for d in ("Easy", "Moderate", "Hard", "mAP")]
                        cells.append(f"{'':<6} " + " ".join(f"{v:7.2f}" for v in vals))
                    lines.append(f"{t:<5.2f} | " + " | ".join(cells))
                lines.append("")
        return "\n".join(lines)


def eval_suite(frames: Sequence[DetectionFrame], categories: Iterable[str] = ("Car",),
               thresholds: Iterable[float] = DEFAULT_THRESHOLDS, noise: int | None = None) -> EvalReport:
    """AP_3D and AP_BEV for every category x threshold x difficulty, plus the
    mean over the three difficulties (``difficulty == "mAP"``)."""
    report = EvalReport()
    for cat in categories:
        for t in thresholds:
            for name, metric in METRICS:
                aps = []
                for level in LEVELS:
                    # Surfaced through the record's no_gt flag instead.
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", NoGroundTruthWarning)
                        res = evaluate(frames, cat, t, level, metric)
                    aps.append(res.ap)
                    report.records.append(_record(cat, name, t, level.label, res.ap, noise,
                                                  num_gt=res.num_gt, no_gt=res.no_gt))
                report.records.append(_record(cat, name, t, "mAP", sum(aps) / len(aps), noise))
    return report


def _record(cat, metric, threshold, difficulty, ap, noise, **extra) -> dict:
    rec = {"category": cat, "metric": metric, "threshold": float(threshold), "difficulty": difficulty,
           "ap": float(ap), "noise": noise}
    rec.update(extra)
    return rec


# ---------------------------------------------------------------------------
# Detectors usable by the harness

def passthrough(frame: DetectionFrame) -> list[DetectionResult]:
    return list(frame.dets)


def points_in_box(points: np.ndarray, box: Box3D, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of ``points`` inside ``box`` grown by ``margin`` per face."""
    if points is None or len(points) == 0:
        return np.zeros(0, dtype=bool)
    pts = np.asarray(points, dtype=np.float64)
    dx, dy = pts[:, 0] - box.cx, pts[:, 1] - box.cy
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return ((np.abs(u) <= 0.5 * box.l + margin) & (np.abs(v) <= 0.5 * box.w + margin)
            & (np.abs(pts[:, 2] - box.cz) <= 0.5 * box.h + margin))


def make_recenter_detector(margin: float = DEFAULT_MARGIN) -> Detector:
    """Non-learned stand-in detector: move each input detection's center to the
    mean of the cloud points inside it (grown by ``margin``).

    Noise points near an object pull the estimate around, so AP reacts to the
    injected noise level.
    """
    def detect(frame: DetectionFrame) -> list[DetectionResult]:
        out = []
        for d in frame.dets:
            mask = points_in_box(frame.points, d.box, margin)
            if mask.any():
                cx, cy, cz = np.asarray(frame.points, dtype=np.float64)[mask, :3].mean(axis=0)
                d = replace(d, box=d.box.replace(cx=float(cx), cy=float(cy), cz=float(cz)))
            out.append(d)
        return out
    return detect


@dataclass
class RobustnessRun:
    noise: int
    report: EvalReport
    points_before: int
    points_after: int
    conserved: bool


def run_robustness(frames: Sequence[DetectionFrame], noise_levels: Iterable[int] = DEFAULT_NOISE_LEVELS,
                   seed: int = 0, detector: Detector = passthrough, margin: float = DEFAULT_MARGIN,
                   categories: Iterable[str] = ("Car",),
                   thresholds: Iterable[float] = DEFAULT_THRESHOLDS) -> list[RobustnessRun]:
    """Inject ``k`` noise points per object for each level, re-detect, re-evaluate.

    ``conserved`` records that every original point survived in order and that
    exactly ``k`` points per ground truth were added.
    """
    categories, thresholds = tuple(categories), tuple(thresholds)
    runs = []
    for k in noise_levels:
        noisy = [inject_noise(fr, k, seed, margin) for fr in frames]
        before = after = 0
        conserved = True
        for orig, new in zip(frames, noisy):
            base = orig.points if orig.points is not None else np.zeros((0, 4))
            before += len(base)
            after += len(new.points)
            conserved &= len(new.points) == len(base) + k * len(orig.gts)
            conserved &= bool(np.array_equal(new.points[:len(base)], base))
        detected = [replace(fr, dets=detector(fr)) for fr in noisy]
        report = eval_suite(detected, categories, thresholds, noise=k)
        runs.append(RobustnessRun(k, report, before, after, conserved))
    return runs


def robustness_table(runs: Sequence[RobustnessRun], category: str = "Car", threshold: float = 0.70) -> str:
    lines = [f"{category} AP_3D (IoU={threshold:.2f}) under injected noise",
             f"{'+noise':>6} {'Mod.':>7} {'Hard':>7} {'mAP':>7} {'points':>9} {'added':>7}"]
    for run in runs:
        q = dict(category=category, metric="AP_3D", threshold=threshold, noise=run.noise)
        mod = run.report.value(difficulty="Moderate", **q)
        hard = run.report.value(difficulty="Hard", **q)
        mean = run.report.value(difficulty="mAP", **q)
        lines.append(f"{run.noise:>6} {mod:7.2f} {hard:7.2f} {mean:7.2f} {run.points_after:>9} "
                     f"{run.points_after - run.points_before:>7}")
    return "\n".join(lines) + "\n"
