import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from setpred3d.geom3d import Box3D, DomainError, Extent, KITTI_EXTENT
from setpred3d.set_matcher import (DEFAULT_WEIGHTS, GroundTruth, MatchWeights, Prediction, PROB_EPS,
                                   focal_cls_cost, hungarian, l1_box_cost, match, match_cost_matrix,
                                   sin_error, smooth_l1)

CAR = Box3D(20, 3, -1, 1.6, 3.9, 1.56, 0.3)


def brute_force(c):
    m, n = c.shape
    return min(math.fsum(c[i, p[i]] for i in range(m)) for p in itertools.permutations(range(n), m))


def test_focal_half():
    expected = 0.25 * 0.25 * math.log(2) - 0.75 * 0.25 * math.log(2)
    assert focal_cls_cost([0.5], 0) == pytest.approx(expected, abs=1e-15)
    assert focal_cls_cost([0.5], 0) == pytest.approx(-0.08664, abs=1e-5)


def test_focal_clamp():
    top = focal_cls_cost([1.0], 0)
    assert math.isfinite(top) and top == focal_cls_cost([1 - PROB_EPS], 0)
    assert math.isfinite(focal_cls_cost([0.0], 0))
    with pytest.raises(DomainError):
        focal_cls_cost([0.5], 1)


def test_focal_strictly_decreasing():
    p = np.linspace(1e-4, 1 - 1e-4, 2001)
    vals = np.array([focal_cls_cost([x], 0) for x in p])
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("tp, tg, expected", [
    (0.0, math.pi, 0.0), (0.0, math.pi / 2, 0.5), (1.3, 1.3, 0.0), (0.0, math.pi / 6, 0.125),
])
def test_sin_error(tp, tg, expected):
    assert sin_error(tp, tg) == pytest.approx(expected, abs=1e-15)


def test_smooth_l1_branches():
    assert smooth_l1(0.5) == 0.125 and smooth_l1(-2.0) == 1.5 and smooth_l1(1.0) == 0.5


@settings(max_examples=500, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_sin_error_pi_periodic(tp, tg):
    # Exact equality is not attainable in binary floating point (pi is rounded);
    # the gap is a few ulps of sin^2.
    assert abs(sin_error(tp, tg) - sin_error(tp, tg + math.pi)) <= 1e-12


def test_l1_box_cost_examples():
    assert l1_box_cost(CAR, CAR) == 0.0
    assert l1_box_cost(CAR, CAR.replace(yaw=CAR.yaw + math.pi)) == pytest.approx(0.0, abs=1e-15)
    sx, sy, sz = KITTI_EXTENT.spans
    assert l1_box_cost(CAR, CAR.replace(cx=CAR.cx + sx)) == pytest.approx(1 / 6, abs=1e-15)
    assert l1_box_cost(CAR, CAR.replace(cy=CAR.cy - sy)) == pytest.approx(1 / 6, abs=1e-15)
    assert l1_box_cost(CAR, CAR.replace(w=CAR.w + sy)) == pytest.approx(1 / 6, abs=1e-15)
    assert l1_box_cost(CAR, CAR.replace(l=CAR.l + sx)) == pytest.approx(1 / 6, abs=1e-15)
    assert l1_box_cost(CAR, CAR.replace(cz=CAR.cz + 1.2), extent=None) == pytest.approx(0.2, abs=1e-15)


def test_match_cost_matrix_examples():
    assert DEFAULT_WEIGHTS == MatchWeights(2.0, 5.0, 2.0)
    gt = GroundTruth(CAR, 0)
    best = Prediction(CAR, (1 - 1e-8,))
    others = [Prediction(CAR.replace(cx=CAR.cx + d), (p,)) for d, p in ((0.5, 0.9), (0.0, 0.5), (3, 0.99))]
    c = match_cost_matrix([best] + others, [gt])
    assert c.shape == (1, 4)
    assert c[0, 0] == pytest.approx(2.0 * focal_cls_cost([1 - 1e-8], 0), abs=1e-12)
    assert np.argmin(c[0]) == 0 and np.all(c[0, 1:] > c[0, 0])
    assert match_cost_matrix(others, []).shape == (0, 3)
    with pytest.raises(DomainError):
        match_cost_matrix([best], [gt, gt])


def test_hungarian_examples():
    a = hungarian([[1, 2], [2, 4]])
    assert a.cols == (1, 0) and a.cost == 4
    d = np.full((5, 5), 10.0) - 9 * np.eye(5)
    assert hungarian(d).cols == (0, 1, 2, 3, 4)
    assert hungarian(np.zeros((2, 3))).cols == (0, 1)
    assert hungarian(np.zeros((0, 4))).cols == ()
    with pytest.raises(DomainError):
        hungarian([[1.0, math.nan]])
    with pytest.raises(DomainError):
        hungarian(np.zeros((3, 2)))


def test_hungarian_vs_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(0, n + 1))
        c = rng.normal(size=(m, n)) if rng.random() < 0.5 else rng.integers(0, 4, (m, n)).astype(float)
        a = hungarian(c)
        assert len(set(a.cols)) == m
        if m:
            assert a.cost == brute_force(c)


def test_hungarian_6x6_exhaustive():
    rng = np.random.default_rng(1)
    for _ in range(30):
        c = rng.uniform(0, 10, (6, 6))
        assert hungarian(c).cost == pytest.approx(brute_force(c), abs=1e-12)


def test_hungarian_vs_scipy():
    rng = np.random.default_rng(2)
    for _ in range(200):
        c = rng.normal(size=(int(rng.integers(1, 15)), 20))
        r, cols = linear_sum_assignment(c)
        assert hungarian(c).cost == pytest.approx(c[r, cols].sum(), abs=1e-9)


def _scene(rng, m, n):
    gts = [GroundTruth(Box3D(*rng.uniform([0, -40, -3], [70, 40, 1]), *rng.uniform(0.5, 4.5, 3),
                             rng.uniform(-math.pi, math.pi)), int(rng.integers(3))) for _ in range(m)]
    preds = []
    for j in range(n):
        if j < m:
            g = gts[j].box
            box = g.replace(cx=g.cx + rng.normal(0, 0.5), cy=g.cy + rng.normal(0, 0.5))
        else:
            box = Box3D(*rng.uniform([0, -40, -3], [70, 40, 1]), *rng.uniform(0.5, 4.5, 3), 0.0)
        preds.append(Prediction(box, tuple(rng.dirichlet(np.ones(3)))))
    rng.shuffle(preds)
    return preds, gts


def test_match_examples():
    rng = np.random.default_rng(3)
    preds, _ = _scene(rng, 0, 5)
    res = match(preds, [])
    assert res.pairs == [] and res.unmatched == [0, 1, 2, 3, 4]
    gt = GroundTruth(CAR, 1)
    preds.insert(2, Prediction(CAR, (0.1, 0.8, 0.1)))
    res = match(preds, [gt])
    assert res.pairs == [(0, 2)] and len(res.unmatched) == 5


def test_match_invariances():
    rng = np.random.default_rng(4)
    for _ in range(20):
        preds, gts = _scene(rng, int(rng.integers(1, 6)), 8)
        base = match(preds, gts)
        assert hungarian(base.costs + 17.5).cols == tuple(j for _, j in base.pairs)
        assert match(preds, gts, DEFAULT_WEIGHTS.scaled(3.7)).pairs == base.pairs
        perm = rng.permutation(len(gts))
        c2 = match_cost_matrix(preds, [gts[k] for k in perm])
        np.testing.assert_array_equal(c2, base.costs[perm])
        rp = match(preds, [gts[k] for k in perm])
        assert sorted((perm[i], j) for i, j in rp.pairs) == sorted(base.pairs)
        assert len({j for _, j in base.pairs}) == len(gts)


def test_raw_meter_l1_is_a_config_choice():
    rng = np.random.default_rng(5)
    preds, gts = _scene(rng, 3, 6)
    c = match_cost_matrix(preds, gts, extent=None)
    assert c.shape == (3, 6) and np.all(np.isfinite(c))
    small = Extent(0, 0, 0, 1, 1, 1)
    np.testing.assert_allclose(match_cost_matrix(preds, gts, extent=small), c, atol=1e-12)
