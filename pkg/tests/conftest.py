import numpy as np
import pytest

from occukit.geometry import CameraIntrinsics, CameraModel, VoxelGridSpec, look_at


def make_camera(eye, target, w=64, h=48, fov_deg=70.0, up=(0.0, 0.0, 1.0)):
    fx = w / 2.0 / np.tan(np.radians(fov_deg) / 2)
    k = CameraIntrinsics(fx, fx, (w - 1) / 2.0, (h - 1) / 2.0, w, h)
    return CameraModel(k, look_at(eye, target, up))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    return VoxelGridSpec((0.0, 0.0, 0.0), (16, 16, 16), 0.1)


@pytest.fixture
def ring_cameras():
    """Four cameras around a 1.6 m cube, all looking at its centre."""
    c = (0.8, 0.8, 0.8)
    eyes = [(3.5, 0.8, 1.6), (-1.9, 0.8, 1.4), (0.8, 3.6, 1.5), (0.8, 0.8, 4.0)]
    return [make_camera(e, c, up=(0.0, 1.0, 0.0) if e[2] > 3 else (0.0, 0.0, 1.0)) for e in eyes]


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    lines = getattr(test_acceptance, "ACCEPTANCE", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
