import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occukit.geometry import (
    CameraIntrinsics, CameraModel, CameraPose, VoxelGridSpec, backproject_pixel,
    backproject_pixels, bilinear_sample, bilinear_sample_many, look_at, project_point,
    project_points, voxel_center, world_to_voxel,
)

import oracles
from conftest import random_rotation

K100 = CameraIntrinsics(100.0, 100.0, 320.0, 180.0, 640, 360)
KI = CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 10, 10)

finite = st.floats(-50, 50, allow_nan=False)


def test_project_pinhole_arithmetic():
    cam = CameraModel(K100)
    assert project_point(cam, (1.0, 2.0, 5.0), scale=1.0) == (340.0, 220.0, 5.0)


def test_project_default_scale_is_quarter():
    cam = CameraModel(K100)
    u, v, d = project_point(cam, (1.0, 2.0, 5.0))
    assert (u, v, d) == (85.0, 55.0, 5.0)


def test_project_behind_camera_absent():
    cam = CameraModel(K100)
    assert project_point(cam, (0.3, -0.2, -1.0), scale=1.0) is None
    assert project_point(cam, (0.0, 0.0, 0.0), scale=1.0) is None


@pytest.mark.parametrize("scale", [0.0, -0.5, 1.5])
def test_project_rejects_bad_scale(scale):
    with pytest.raises(ValueError):
        project_point(CameraModel(K100), (0, 0, 1), scale=scale)


def test_backproject_identity_intrinsics():
    cam = CameraModel(KI)
    np.testing.assert_array_equal(backproject_pixel(cam, 2, 3, 4), [8.0, 12.0, 4.0])


def test_backproject_inverse_pose():
    cam = CameraModel(KI, CameraPose(np.eye(3), np.array([0.0, 0.0, -4.0])))
    np.testing.assert_array_equal(backproject_pixel(cam, 2, 3, 4), [8.0, 12.0, 8.0])


@pytest.mark.parametrize("depth", [0.0, -1.0])
def test_backproject_rejects_nonpositive_depth(depth):
    with pytest.raises(ValueError):
        backproject_pixel(CameraModel(KI), 1, 1, depth)


def test_projection_matches_matrix_oracle(rng):
    for _ in range(50):
        R = random_rotation(rng)
        t = rng.normal(size=3)
        cam = CameraModel(K100, CameraPose(R, t))
        p = R.T @ (np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.5, 20)]) - t)
        got = project_point(cam, p, scale=1.0)
        ref = oracles.project(K100.matrix(), R, t, p)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-9)


def test_round_trip_1000_points(rng):
    R = random_rotation(rng)
    cam = CameraModel(K100, CameraPose(R, rng.normal(size=3)))
    u = rng.uniform(-100, 740, 1000)
    v = rng.uniform(-100, 460, 1000)
    d = rng.uniform(0.1, 60, 1000)
    pts = backproject_pixels(cam, u, v, d)
    uv, depth = project_points(cam, pts, scale=1.0)
    assert np.abs(uv[:, 0] - u).max() < 1e-9
    assert np.abs(uv[:, 1] - v).max() < 1e-9
    assert np.abs(depth - d).max() < 1e-9
    back = backproject_pixels(cam, uv[:, 0], uv[:, 1], depth)
    assert np.abs(back - pts).max() < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 1.0), st.tuples(finite, finite, st.floats(0.2, 50)))
def test_scaled_projection_consistency(s, p):
    cam = CameraModel(K100)
    full = project_point(cam, p, scale=1.0)
    scaled = project_point(cam, p, scale=s)
    np.testing.assert_allclose(scaled[:2], np.multiply(full[:2], s), rtol=1e-12, atol=1e-9)
    assert scaled[2] == full[2]


def test_pose_validation():
    with pytest.raises(ValueError):
        CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        CameraPose(np.diag([1.0, 2.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 0, 0, 4, 4)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 1.0, 0, 0, 0, 4)


def test_look_at_points_forward():
    pose = look_at((0.0, -5.0, 2.0), (0.0, 0.0, 2.0))
    cam = CameraModel(K100, pose)
    u, v, d = project_point(cam, (0.0, 0.0, 2.0), scale=1.0)
    assert (u, v) == pytest.approx((320.0, 180.0), abs=1e-9)
    assert d == pytest.approx(5.0)
    # world up appears as image up (smaller v)
    _, v_up, _ = project_point(cam, (0.0, 0.0, 3.0), scale=1.0)
    assert v_up < v
    np.testing.assert_allclose(pose.center, [0.0, -5.0, 2.0], atol=1e-12)


def test_scaled_intrinsics():
    k = K100.scaled(0.25)
    assert (k.fx, k.fy, k.cx, k.cy, k.width, k.height) == (25.0, 25.0, 80.0, 45.0, 160, 90)


def test_world_to_voxel_examples():
    spec = VoxelGridSpec((0, 0, 0), (4, 4, 4), 0.1)
    assert world_to_voxel(spec, (0.05, 0.15, 0.25)) == (0, 1, 2)
    assert world_to_voxel(spec, tuple(spec.upper)) is None
    assert world_to_voxel(spec, (-1e-12, 0.0, 0.0)) is None
    assert world_to_voxel(spec, (0.0, 0.0, 0.0)) == (0, 0, 0)


def test_voxel_center_examples():
    spec = VoxelGridSpec((0, 0, 0), (4, 4, 4), 0.1)
    np.testing.assert_allclose(voxel_center(spec, 0, 0, 0), [0.05, 0.05, 0.05], atol=1e-15)
    np.testing.assert_allclose(voxel_center(spec, 1, 2, 3), [0.15, 0.25, 0.35], atol=1e-15)
    for bad in [(4, 0, 0), (0, -1, 0)]:
        with pytest.raises(IndexError):
            voxel_center(spec, *bad)


@pytest.mark.parametrize("origin,size", [((0, 0, 0), 0.1), ((-3.7, 12.1, -0.05), 0.1),
                                         ((1e3, -2e3, 5.0), 0.25)])
def test_voxel_center_round_trip_exhaustive(origin, size):
    spec = VoxelGridSpec(origin, (8, 8, 8), size)
    for idx in itertools.product(range(8), repeat=3):
        assert world_to_voxel(spec, voxel_center(spec, *idx)) == idx


def test_centers_array_matches_scalar():
    spec = VoxelGridSpec((-1.0, 2.0, 0.3), (3, 4, 5), 0.1)
    c = spec.centers()
    for idx in itertools.product(range(3), range(4), range(5)):
        np.testing.assert_array_equal(c[idx], voxel_center(spec, *idx))


def test_spec_validation():
    for kw in [dict(dims=(0, 1, 1)), dict(voxel_size=0.0), dict(voxel_size=-0.1)]:
        with pytest.raises(ValueError):
            VoxelGridSpec(**kw)
    assert VoxelGridSpec.from_bounds((0, 0, 0), (36, 12, 3)).dims == (360, 120, 30)


def test_bilinear_examples():
    fmap = np.arange(12, dtype=float).reshape(1, 3, 4)
    assert bilinear_sample(fmap, 2, 1)[0] == fmap[0, 1, 2]
    assert bilinear_sample(fmap, 1.5, 0)[0] == 1.5
    assert bilinear_sample(fmap, 0, 0.5)[0] == 2.0
    const = np.full((2, 5, 7), 0.3)
    for u, v in [(0.2, 0.7), (6.0, 4.0), (-3, 9), (3.33, 2.71)]:
        np.testing.assert_array_equal(bilinear_sample(const, u, v), [0.3, 0.3])


def test_bilinear_clamps_to_border():
    fmap = np.arange(12, dtype=float).reshape(1, 3, 4)
    assert bilinear_sample(fmap, -5, -5)[0] == 0.0
    assert bilinear_sample(fmap, 10, 10)[0] == 11.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 9), st.floats(-2, 7), st.integers(0, 2**32 - 1))
def test_bilinear_convex_and_matches_oracle(u, v, seed):
    fmap = np.random.default_rng(seed).normal(size=(3, 6, 8))
    got = bilinear_sample(fmap, u, v)
    np.testing.assert_allclose(got, oracles.bilinear(fmap, u, v), atol=1e-12)
    uu, vv = np.clip(u, 0, 7), np.clip(v, 0, 5)
    u0, v0 = int(np.floor(uu)), int(np.floor(vv))
    support = fmap[:, v0:v0 + 2, u0:u0 + 2].reshape(3, -1)
    assert np.all(got >= support.min(axis=1) - 1e-12)
    assert np.all(got <= support.max(axis=1) + 1e-12)


def test_bilinear_many_shape():
    fmap = np.zeros((5, 4, 4))
    assert bilinear_sample_many(fmap, [0, 1, 2], [0, 1, 2]).shape == (3, 5)
