"""Pinhole cameras and voxel-grid coordinates.

Conventions
-----------
* Poses are stored world->camera: ``x_cam = R @ p + t``.
* Camera axes: +x right, +y down, +z forward.
* Pixel ``(u, v)`` refers to the continuous image coordinate ``(u, v)``;
  texel centres sit at integer coordinates.
* Voxel ``(ix, iy, iz)`` covers the half-open box
  ``origin + [i, i + 1) * voxel_size`` on each axis; z is vertical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import FEATURE_SCALE, VOXEL_SIZE

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")

    def scaled(self, s: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera resampled by factor ``s``."""
        if not s > 0:
            raise ValueError(f"scale must be positive, got {s}")
        return CameraIntrinsics(
            self.fx * s, self.fy * s, self.cx * s, self.cy * s,
            max(1, int(round(self.width * s))), max(1, int(round(self.height * s))),
        )

    def matrix(self, scale: float = 1.0) -> np.ndarray:
        return np.array(
            [[self.fx * scale, 0.0, self.cx * scale],
             [0.0, self.fy * scale, self.cy * scale],
             [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True, eq=False)
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise ValueError("pose contains non-finite values")
        if np.abs(rot.T @ rot - np.eye(3)).max() > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.translation

    def camera_to_world(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.translation) @ self.rotation

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))


@dataclass(frozen=True)
class CameraModel:
    intrinsics: CameraIntrinsics
    pose: CameraPose = field(default_factory=CameraPose.identity)
    name: str = "cam"

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> CameraPose:
    """World->camera pose for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(forward, up / np.linalg.norm(up))) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    # re-orthonormalise to keep within ORTHO_TOL
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    return CameraPose(rot, -rot @ eye)


def project_points(cam: CameraModel, pts, scale: float = FEATURE_SCALE):
    """Vectorised projection. Returns ``(uv, depth)``; ``uv`` is NaN where depth <= 0."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    xc = cam.pose.world_to_camera(pts)
    depth = xc[:, 2]
    k = cam.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (k.fx * xc[:, 0] / depth + k.cx) * scale
        v = (k.fy * xc[:, 1] / depth + k.cy) * scale
    uv = np.stack([u, v], axis=1)
    uv[depth <= 0] = np.nan
    return uv, depth


def project_point(cam: CameraModel, p, scale: float = FEATURE_SCALE) -> Optional[tuple]:
    if not 0 < scale <= 1:
        raise ValueError(f"scale must be in (0, 1], got {scale}")
    uv, depth = project_points(cam, p, scale)
    if not depth[0] > 0:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0])


def backproject_pixels(cam: CameraModel, u, v, depth) -> np.ndarray:
    """``x = depth * K^-1 [u, v, 1]``, then camera->world. Returns (N, 3)."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    depth = np.asarray(depth, dtype=np.float64).ravel()
    k = cam.intrinsics
    xc = np.stack(
        [(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth], axis=1
    )
    return cam.pose.camera_to_world(xc)


def backproject_pixel(cam: CameraModel, u: float, v: float, depth: float) -> np.ndarray:
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}")
    return backproject_pixels(cam, u, v, depth)[0]


@dataclass(frozen=True)
class VoxelGridSpec:
    origin: tuple = (0.0, 0.0, 0.0)
    dims: tuple = (1, 1, 1)
    voxel_size: float = VOXEL_SIZE

    def __post_init__(self):
        origin = tuple(float(x) for x in self.origin)
        dims = tuple(int(d) for d in self.dims)
        if len(origin) != 3 or len(dims) != 3:
            raise ValueError("origin and dims need three components")
        if not all(np.isfinite(origin)):
            raise ValueError("origin must be finite")
        if not (np.isfinite(self.voxel_size) and self.voxel_size > 0):
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        if min(dims) < 1:
            raise ValueError(f"dims must be >= 1, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float], voxel_size: float = VOXEL_SIZE):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        dims = np.maximum(1, np.round((hi - lo) / voxel_size).astype(int))
        return cls(tuple(lo), tuple(dims), voxel_size)

    @property
    def shape(self) -> tuple:
        return self.dims

    @property
    def num_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.dims) * self.voxel_size

    def centers(self) -> np.ndarray:
        """Voxel centres as an (X, Y, Z, 3) array."""
        axes = [self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size
                for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def column_centers(self) -> np.ndarray:
        """(X, Y, 2) planar centres of the voxel columns."""
        return self.centers()[:, :, 0, :2]


def world_to_voxel_indices(spec: VoxelGridSpec, pts) -> tuple:
    """Vectorised lookup. Returns ``(idx (N,3) int64, inside (N,) bool)``."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    with np.errstate(invalid="ignore"):
        f = np.floor((pts - np.asarray(spec.origin)) / spec.voxel_size)
    inside = np.all(np.isfinite(f), axis=1)
    inside &= np.all((f >= 0) & (f < np.asarray(spec.dims)), axis=1)
    idx = np.where(inside[:, None], f, 0).astype(np.int64)
    return idx, inside


def world_to_voxel(spec: VoxelGridSpec, p) -> Optional[tuple]:
    idx, inside = world_to_voxel_indices(spec, p)
    if not inside[0]:
        return None
    return tuple(int(i) for i in idx[0])


def voxel_center(spec: VoxelGridSpec, ix: int, iy: int, iz: int) -> np.ndarray:
    index = (ix, iy, iz)
    for i, d in zip(index, spec.dims):
        if not 0 <= i < d:
            raise IndexError(f"voxel index {index} outside dims {spec.dims}")
    return np.asarray(spec.origin) + (np.asarray(index, dtype=np.float64) + 0.5) * spec.voxel_size


def bilinear_sample_many(fmap: np.ndarray, u, v) -> np.ndarray:
    """Sample a (C, H, W) map at many points. Returns (N, C).

    Coordinates are clamped to ``[0, W-1] x [0, H-1]`` before blending.
    """
    fmap = np.asarray(fmap)
    if fmap.ndim == 2:
        fmap = fmap[None]
    _, h, w = fmap.shape
    u = np.clip(np.asarray(u, dtype=np.float64).ravel(), 0.0, w - 1)
    v = np.clip(np.asarray(v, dtype=np.float64).ravel(), 0.0, h - 1)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    au = u - u0
    av = v - v0
    # a + w * (b - a) keeps constant maps exact
    a = fmap[:, v0, u0]
    top = a + au * (fmap[:, v0, u1] - a)
    b = fmap[:, v1, u0]
    bottom = b + au * (fmap[:, v1, u1] - b)
    return (top + av * (bottom - top)).T


def bilinear_sample(fmap: np.ndarray, u: float, v: float) -> np.ndarray:
    return bilinear_sample_many(fmap, [u], [v])[0]
