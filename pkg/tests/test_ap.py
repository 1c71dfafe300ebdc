import math
import random
from fractions import Fraction

import pytest

from setpred3d.geom3d import Box3D, bev_iou_rotated, iou_3d_rotated, to_bev
from setpred3d.kitti import (DetectionFrame, DetectionResult, Difficulty, NoGroundTruthWarning, ap_11,
                             box_to_label, difficulty_of, evaluate)

W, L, H = 1.6, 3.9, 1.56
PRESET = {"easy": (50.0, 0, 0.0), "moderate": (30.0, 1, 0.2), "hard": (28.0, 2, 0.4), "ignored": (20.0, 0, 0.0)}


def car(x, y, yaw=0.0):
    return Box3D(x, y, -1.0, W, L, H, yaw)


def gt(box, level, category="Car"):
    height, occ, trunc = PRESET[level]
    return box_to_label(box, category, truncation=trunc, occlusion=occ, bbox=(0.0, 0.0, 50.0, height)), box


def oracle_ap(frames, category, thr, difficulty, metric="3d"):
    """Benchmark rules written out with exact fractions and plain loops."""
    iou = iou_3d_rotated if metric == "3d" else (lambda a, b: bev_iou_rotated(to_bev(a), to_bev(b)))
    scored = []
    n_gt = 0
    for fr in frames:
        gts = [(b, difficulty_of(lab) <= difficulty) for lab, b in fr.gts if lab.category == category]
        n_gt += sum(ok for _, ok in gts)
        used = [False] * len(gts)
        order = sorted((d for d in enumerate(fr.dets) if d[1].category == category),
                       key=lambda d: (-d[1].score, d[0]))
        for j, d in order:
            best, best_iou = None, -1.0
            for i, (b, ok) in enumerate(gts):
                v = iou(d.box, b)
                if ok and not used[i] and v >= thr and v > best_iou:
                    best, best_iou = i, v
            if best is not None:
                used[best] = True
                scored.append((d.score, fr.frame_id, j, True))
                continue
            ign = [i for i, (b, ok) in enumerate(gts) if not ok and not used[i] and iou(d.box, b) >= thr]
            if ign:
                used[max(ign, key=lambda i: iou(d.box, gts[i][0]))] = True
            else:
                scored.append((d.score, fr.frame_id, j, False))
    if n_gt == 0:
        return 0.0
    scored.sort(key=lambda s: (-s[0], s[1], s[2]))
    points = []
    tp = 0
    for n, s in enumerate(scored, 1):
        tp += s[3]
        points.append((Fraction(tp, n_gt), Fraction(tp, n)))
    total = Fraction(0)
    for k in range(11):
        reach = [p for r, p in points if r >= Fraction(k, 10)]
        total += max(reach, default=Fraction(0))
    return float(total * 100 / 11)


def three_frames():
    g1, g2, g3, g4, g5 = car(10, 0), car(20, 0), car(10, 10), car(30, 10), car(40, -10)
    a = DetectionFrame("a", [gt(g1, "easy"), gt(g2, "moderate")],
                       [DetectionResult(g1, 0.95), DetectionResult(g1, 0.60), DetectionResult(g2, 0.30)])
    b = DetectionFrame("b", [gt(g3, "moderate"), gt(g4, "ignored")],
                       [DetectionResult(g3.replace(cy=g3.cy + 0.3), 0.90), DetectionResult(g4, 0.80),
                        DetectionResult(g3, 0.50)])
    c = DetectionFrame("c", [gt(g5, "hard")], [DetectionResult(car(60, 30), 0.70), DetectionResult(g5, 0.20)])
    return [a, b, c]


@pytest.mark.parametrize("height, occ, trunc, expected", [
    (50, 0, 0.1, Difficulty.EASY), (30, 1, 0.2, Difficulty.MODERATE), (20, 0, 0.0, Difficulty.IGNORED),
    (40, 0, 0.15, Difficulty.EASY), (39.9, 0, 0.0, Difficulty.MODERATE), (26, 2, 0.5, Difficulty.HARD),
    (100, 3, 0.0, Difficulty.IGNORED), (100, 0, 0.51, Difficulty.IGNORED),
])
def test_difficulty(height, occ, trunc, expected):
    lab = box_to_label(car(0, 0), truncation=trunc, occlusion=occ, bbox=(0, 10, 10, 10 + height))
    assert difficulty_of(lab) == expected


def test_single_perfect_detection():
    fr = DetectionFrame("x", [gt(car(5, 5), "easy")], [DetectionResult(car(5, 5), 0.5)])
    assert ap_11([fr], "Car", 0.7, Difficulty.EASY) == 100.0


def test_false_positive_then_hit_is_fifty():
    fr = DetectionFrame("x", [gt(car(5, 5), "easy")],
                        [DetectionResult(car(30, 30), 0.9), DetectionResult(car(5, 5), 0.8)])
    assert oracle_ap([fr], "Car", 0.7, Difficulty.EASY) == 50.0
    assert ap_11([fr], "Car", 0.7, Difficulty.EASY) == 50.0


def test_no_detections_and_no_gt():
    fr = DetectionFrame("x", [gt(car(5, 5), "easy")], [])
    assert ap_11([fr], "Car", 0.7) == 0.0
    empty = DetectionFrame("y", [], [DetectionResult(car(5, 5), 0.9)])
    with pytest.warns(NoGroundTruthWarning):
        assert ap_11([empty], "Car", 0.7) == 0.0
    with pytest.warns(NoGroundTruthWarning):
        res = evaluate([fr], "Pedestrian", 0.5)
    assert res.no_gt and res.ap == 0.0
    with pytest.raises(ValueError):
        ap_11([fr], "Car", 0.0)


def test_three_frame_scenario():
    frames = three_frames()
    hand = {Difficulty.HARD: 53 / 77 * 100, Difficulty.MODERATE: 7.5 / 11 * 100, Difficulty.EASY: 100.0}
    for level, expected in hand.items():
        o = oracle_ap(frames, "Car", 0.7, level)
        assert abs(o - expected) <= 1e-12
        assert abs(ap_11(frames, "Car", 0.7, level) - o) <= 1e-12
    res = evaluate(frames, "Car", 0.7, Difficulty.HARD)
    assert (res.num_gt, res.num_tp, res.num_fp) == (4, 4, 3)
    # At 0.65 the shifted detection becomes a hit and the late exact one a duplicate.
    assert abs(ap_11(frames, "Car", 0.65, Difficulty.HARD) - oracle_ap(frames, "Car", 0.65, Difficulty.HARD)) <= 1e-12


def _random_frames(rng, n=5):
    frames = []
    for f in range(n):
        gts, dets = [], []
        for k in range(rng.randint(0, 4)):
            box = car(10 + 12 * k, rng.uniform(-20, 20), rng.uniform(-math.pi, math.pi))
            gts.append(gt(box, rng.choice(list(PRESET))))
            for _ in range(rng.randint(0, 2)):
                d = box.replace(cx=box.cx + rng.gauss(0, 0.25), cy=box.cy + rng.gauss(0, 0.25),
                                yaw=box.yaw + rng.gauss(0, 0.1))
                dets.append(DetectionResult(d, round(rng.random(), 3)))
        for _ in range(rng.randint(0, 2)):
            dets.append(DetectionResult(car(rng.uniform(0, 70), rng.uniform(-40, 40)), round(rng.random(), 3)))
        frames.append(DetectionFrame(f"{f:03d}", gts, dets))
    return frames


@pytest.mark.filterwarnings("ignore::setpred3d.kitti.ap.NoGroundTruthWarning")
def test_against_oracle_on_random_scenes():
    rng = random.Random(0)
    for _ in range(40):
        frames = _random_frames(rng)
        for level in (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD):
            for metric in ("3d", "bev"):
                assert abs(ap_11(frames, "Car", 0.7, level, metric) - oracle_ap(frames, "Car", 0.7, level, metric)) \
                    <= 1e-12


@pytest.mark.filterwarnings("ignore::setpred3d.kitti.ap.NoGroundTruthWarning")
def test_properties():
    rng = random.Random(1)
    for _ in range(40):
        frames = _random_frames(rng)
        aps = [ap_11(frames, "Car", t, Difficulty.HARD) for t in (0.5, 0.7, 0.75, 0.8)]
        assert all(0.0 <= a <= 100.0 for a in aps)
        assert aps == sorted(aps, reverse=True)
        shuffled = frames[:]
        rng.shuffle(shuffled)
        assert ap_11(shuffled, "Car", 0.7, Difficulty.HARD) == aps[1]
        # A true positive ahead of everything never lowers AP.
        extra = DetectionFrame("zzz", [gt(car(5, 5), "easy")], [DetectionResult(car(5, 5), 2.0)])
        assert ap_11(frames + [extra], "Car", 0.7, Difficulty.HARD) >= aps[1]


def test_never_two_detections_on_one_gt():
    fr = DetectionFrame("x", [gt(car(5, 5), "easy")], [DetectionResult(car(5, 5), s) for s in (0.9, 0.8, 0.7)])
    res = evaluate([fr], "Car", 0.7, Difficulty.EASY)
    assert (res.num_tp, res.num_fp) == (1, 2)


def test_lateral_shift_sweep():
    # IoU of a sideways shift s on a 1.6 m wide car is (1.6 - s) / (1.6 + s).
    rows = {}
    for s in (0.0, 0.1, 0.2, 0.3):
        frames = [DetectionFrame(f"{i}", [gt(car(10 + 8 * i, 0), "easy")],
                                 [DetectionResult(car(10 + 8 * i, s), 0.9)]) for i in range(5)]
        assert iou_3d_rotated(car(0, 0), car(0, s)) == pytest.approx((1.6 - s) / (1.6 + s))
        rows[s] = [ap_11(frames, "Car", t, Difficulty.EASY) for t in (0.70, 0.75, 0.80)]
        assert rows[s] == sorted(rows[s], reverse=True)
    assert rows[0.0] == rows[0.1] == [100.0, 100.0, 100.0]
    assert rows[0.2] == [100.0, 100.0, 0.0]
    assert rows[0.3] == [0.0, 0.0, 0.0]
