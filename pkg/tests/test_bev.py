import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occukit.bev import BevMap, Detection, collapse_to_bev, extract_locations, mse_loss, splat_gaussian
from occukit.geometry import VoxelGridSpec
from occukit.view_transform import FeatureVolume

SPEC = VoxelGridSpec((0.0, 0.0, 0.0), (40, 30, 5), 0.1)


def test_collapse_constant_and_ramp():
    vol = np.full((2, 3, 4, 5), 1.25)
    np.testing.assert_array_equal(collapse_to_bev(vol), np.full((2, 3, 4), 1.25))
    ramp = np.broadcast_to(np.arange(7.0), (1, 2, 2, 7))
    np.testing.assert_array_equal(collapse_to_bev(ramp), np.full((1, 2, 2), 3.0))


def test_collapse_matches_loop(rng):
    vol = rng.normal(size=(3, 5, 4, 6))
    fv = FeatureVolume(vol, np.ones((5, 4, 6), dtype=int), None)
    got = collapse_to_bev(fv)
    for c in range(3):
        for x in range(5):
            for y in range(4):
                assert abs(got[c, x, y] - sum(vol[c, x, y]) / 6) <= 1e-12


def test_splat_examples():
    assert not splat_gaussian([], SPEC).values.any()
    m = splat_gaussian([(1.05, 2.05)], SPEC, sigma=0.3)
    assert m.values[10, 20] == 1.0
    assert m.values.max() == 1.0
    # three cells away along x is exactly sigma
    assert m.values[13, 20] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert m.dims == SPEC.dims[:2]


def test_splat_max_combination():
    a = splat_gaussian([(1.05, 1.05)], SPEC).values
    b = splat_gaussian([(1.35, 1.05)], SPEC).values
    both = splat_gaussian([(1.05, 1.05), (1.35, 1.05)], SPEC).values
    np.testing.assert_array_equal(both, np.maximum(a, b))
    assert both.max() <= 1.0


def test_splat_rejects_bad_sigma():
    with pytest.raises(ValueError):
        splat_gaussian([(1, 1)], SPEC, sigma=0)


def test_mse_examples():
    t = np.zeros((3, 3))
    v, g = mse_loss(t, t)
    assert v == 0.0 and not g.any()
    v, g = mse_loss(np.array([[1.0]]), np.array([[0.0]]))
    assert v == 1.0 and g[0, 0] == 2.0
    with pytest.raises(ValueError):
        mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_mse_gradient_fd(rng):
    h = 1e-5
    for _ in range(20):
        p, t = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        _, g = mse_loss(p, t)
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            e = np.zeros_like(p)
            e[idx] = h
            fd[idx] = (mse_loss(p + e, t)[0] - mse_loss(p - e, t)[0]) / (2 * h)
        assert np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-8)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mse_nonnegative_zero_iff_equal(seed):
    r = np.random.default_rng(seed)
    p = r.normal(size=(3, 4))
    q = p.copy()
    assert mse_loss(p, q)[0] == 0.0
    q[r.integers(3), r.integers(4)] += 0.5
    assert mse_loss(p, q)[0] > 0.0


def test_extract_examples():
    bev = BevMap.for_grid(SPEC)
    assert extract_locations(bev) == []
    bev.values[5, 7] = 0.9
    dets = extract_locations(bev)
    assert dets == [Detection(pytest.approx(0.55), pytest.approx(0.75), 0.9)]
    bev.values[8, 7] = 0.8  # 0.3 m away
    dets = extract_locations(bev, nms_radius=0.5)
    assert [d.score for d in dets] == [0.9]
    bev.values[5 + 10, 7] = 0.7  # 1.0 m away survives
    assert [d.score for d in extract_locations(bev, nms_radius=0.5)] == [0.9, 0.7]


def test_extract_threshold_inclusive():
    bev = BevMap.for_grid(SPEC)
    bev.values[3, 3] = 0.5
    bev.values[30, 20] = 0.4999
    assert [d.score for d in extract_locations(bev, tau=0.5)] == [0.5]


def test_extract_tie_order():
    bev = BevMap.for_grid(SPEC)
    bev.values[10, 10] = 0.8
    bev.values[10, 12] = 0.8
    dets = extract_locations(bev, nms_radius=0.5)
    assert len(dets) == 1 and dets[0].y == pytest.approx(1.05)


@pytest.mark.parametrize("kw", [dict(tau=0.0), dict(tau=1.0), dict(nms_radius=0.0)])
def test_extract_bad_params(kw):
    with pytest.raises(ValueError):
        extract_locations(BevMap.for_grid(SPEC), **kw)


@st.composite
def separated_locations(draw):
    spec = VoxelGridSpec((0, 0, 0), (60, 60, 1), 0.1)
    n = draw(st.integers(0, 6))
    cells = []
    for _ in range(n):
        c = (draw(st.integers(0, 59)), draw(st.integers(0, 59)))
        if all(math.hypot(c[0] - a, c[1] - b) * 0.1 > 1.0 + 1e-9 for a, b in cells):
            cells.append(c)
    return spec, [((a + 0.5) * 0.1, (b + 0.5) * 0.1) for a, b in cells]


@settings(max_examples=100, deadline=None)
@given(separated_locations())
def test_splat_extract_round_trip(data):
    spec, locs = data
    dets = extract_locations(splat_gaussian(locs, spec), nms_radius=0.5)
    got = sorted((d.x, d.y) for d in dets)
    want = sorted(locs)
    assert len(got) == len(want)
    for (gx, gy), (wx, wy) in zip(got, want):
        assert abs(gx - wx) <= 0.05 and abs(gy - wy) <= 0.05


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 0.8))
def test_extract_deterministic_and_separated(seed, radius):
    r = np.random.default_rng(seed)
    vals = np.round(r.uniform(0, 1, size=(20, 20)), 2)  # rounding forces ties
    bev = BevMap(vals, (0.0, 0.0), 0.1)
    dets = extract_locations(bev, 0.5, radius)
    # same map built in a different memory layout / order of writes
    bev2 = BevMap(np.asfortranarray(vals.copy()), (0.0, 0.0), 0.1)
    assert extract_locations(bev2, 0.5, radius) == dets
    assert all(d.score >= 0.5 for d in dets)
    for i in range(len(dets)):
        for j in range(i + 1, len(dets)):
            assert math.hypot(dets[i].x - dets[j].x, dets[i].y - dets[j].y) > radius
