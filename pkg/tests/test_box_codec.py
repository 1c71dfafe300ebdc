import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from setpred3d.box_codec import DEFAULT_NUM_PROPOSALS, Residual7, decode, encode, init_proposals
from setpred3d.geom3d import Box3D, DomainError, Extent, KITTI_EXTENT

from conftest import boxes3d

PROPOSAL = Box3D(10, 5, -1, 1.6, 3.9, 1.56, 0)
GT = Box3D(11, 5.5, -0.9, 1.8, 4.2, 1.5, 0.1)


def test_encode_hand_example():
    r = encode(GT, PROPOSAL)
    d = math.sqrt(17.77)
    expected = (1 / d, 0.5 / d, 0.1 / 1.56, math.log(1.8 / 1.6), math.log(4.2 / 3.9), math.log(1.5 / 1.56), 0.1)
    np.testing.assert_allclose(r, expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(r, (0.23722, 0.11861, 0.06410, 0.11778, 0.07411, -0.03922, 0.1),
                               atol=1e-5)


def test_decode_zero_residual_is_proposal():
    assert decode(Residual7(0, 0, 0, 0, 0, 0, 0), PROPOSAL) == PROPOSAL


def test_heading_residual_not_wrapped():
    r = encode(GT.replace(yaw=7.0), PROPOSAL.replace(yaw=-0.5))
    assert r.dtheta == 7.5


def test_domain_errors():
    class Flat:
        cx = cy = cz = yaw = 0.0
        w, l, h = 0.0, 1.0, 1.0
    with pytest.raises(DomainError):
        encode(GT, Flat())
    with pytest.raises(DomainError):
        decode(Residual7(0, 0, 0, math.inf, 0, 0, 0), PROPOSAL)


@settings(max_examples=500, deadline=None)
@given(boxes3d(), boxes3d())
def test_round_trip(gt, proposal):
    back = decode(encode(gt, proposal), proposal)
    np.testing.assert_allclose(back.as_array(), gt.as_array(), rtol=1e-9, atol=1e-12)


def test_round_trip_10k():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        g = Box3D(*rng.uniform(-50, 50, 3), *rng.uniform(0.2, 10, 3), rng.uniform(-10, 10))
        p = Box3D(*rng.uniform(-50, 50, 3), *rng.uniform(0.2, 10, 3), rng.uniform(-10, 10))
        back = decode(encode(g, p), p).as_array()
        assert np.all(np.abs(back - g.as_array()) <= 1e-9 * np.maximum(1.0, np.abs(g.as_array())))


@settings(max_examples=200, deadline=None)
@given(boxes3d(), boxes3d(), st.floats(-30, 30), st.floats(-30, 30), st.floats(-5, 5))
def test_translation_covariance(gt, proposal, tx, ty, tz):
    def move(b):
        return b.replace(cx=b.cx + tx, cy=b.cy + ty, cz=b.cz + tz)
    np.testing.assert_allclose(encode(move(gt), move(proposal)), encode(gt, proposal), atol=1e-9)


def test_init_proposals():
    props = init_proposals()
    assert len(props) == DEFAULT_NUM_PROPOSALS == 100
    b = props[0]
    assert all(p == b for p in props)
    assert b.center == pytest.approx((35.2, 0.0, -1.0))
    assert (b.l, b.w, b.h, b.yaw) == pytest.approx((70.4, 80.0, 4.0, 0.0))
    small = init_proposals(Extent(0, 0, 0, 2, 1, 1), n=3)
    assert len(small) == 3 and (small[0].l, small[0].w) == (2, 1)
    with pytest.raises(DomainError):
        init_proposals(KITTI_EXTENT, 0)
