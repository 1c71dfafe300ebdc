"""Synthetic KITTI-like frames for tests, demos and the robustness harness."""
from __future__ import annotations

import numpy as np

from ..geom3d import Box3D, Extent, KITTI_EXTENT
from .io import DetectionFrame, DetectionResult, box_to_label
from .noise import sample_in_box

CAR_SIZE = (1.6, 3.9, 1.56)  # w, l, h

# (bbox height px, occlusion, truncation): one entry per difficulty bucket.
_DIFFICULTY_PRESETS = ((50.0, 0, 0.0), (30.0, 1, 0.2), (28.0, 2, 0.4), (20.0, 0, 0.0))


def make_frames(n_frames: int = 10, seed: int = 0, objects_per_frame: tuple[int, int] = (2, 6),
                points_per_object: int = 150, background_points: int = 400,
                extent: Extent = KITTI_EXTENT, category: str = "Car") -> list[DetectionFrame]:
    """Frames with non-overlapping cars, points inside every car plus scattered
    background, and perfect detections (score descending with object index)."""
    rng = np.random.default_rng(seed)
    w, l, h = CAR_SIZE
    frames = []
    for f in range(n_frames):
        n_obj = int(rng.integers(objects_per_frame[0], objects_per_frame[1] + 1))
        boxes: list[Box3D] = []
        while len(boxes) < n_obj:
            cx = rng.uniform(extent.x_min + 5.0, extent.x_max - 5.0)
            cy = rng.uniform(extent.y_min + 5.0, extent.y_max - 5.0)
            if any(np.hypot(cx - b.cx, cy - b.cy) < 6.0 for b in boxes):
                continue
            boxes.append(Box3D(cx, cy, -1.0, w, l, h, rng.uniform(-np.pi, np.pi)))
        gts = []
        for i, box in enumerate(boxes):
            height, occ, trunc = _DIFFICULTY_PRESETS[i % len(_DIFFICULTY_PRESETS)]
            lab = box_to_label(box, category, truncation=trunc, occlusion=occ,
                               bbox=(100.0, 100.0, 200.0, 100.0 + height))
            gts.append((lab, box))
        dets = [DetectionResult(box, round(0.95 - 0.05 * i, 6), category) for i, box in enumerate(boxes)]
        pts = [sample_in_box(b, points_per_object, rng) for b in boxes]
        lo, hi = np.array(extent.mins), np.array(extent.maxs)
        bg = lo + rng.random((background_points, 3)) * (hi - lo)
        pts.append(np.column_stack([bg, rng.random(background_points)]))
        frames.append(DetectionFrame(f"{f:06d}", gts, dets, np.vstack(pts).astype(np.float32)))
    return frames


