"""First-hit label rendering of voxel volumes.

Rays leave the camera centre through pixel coordinates ``(u, v)`` and walk
the grid voxel by voxel (Amanatides & Woo stepping). The first non-Free
voxel met between ``min_hit_distance`` and ``max_trace_distance`` (metres
along the ray) colours the pixel; everything else is 0.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from .config import MAX_TRACE_DISTANCE, MIN_HIT_DISTANCE
from .geometry import CameraModel, VoxelGridSpec

# the bundled TBB is too old for numba; avoid the warning it triggers
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@dataclass(frozen=True)
class RayMarchParams:
    """``max_steps`` caps voxel crossings per ray; None walks to grid exit or max trace."""

    max_steps: Optional[int] = None
    min_hit_distance: float = MIN_HIT_DISTANCE
    max_trace_distance: float = MAX_TRACE_DISTANCE

    def __post_init__(self):
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if not (self.min_hit_distance > 0 and self.max_trace_distance > 0):
            raise ValueError("hit and trace distances must be positive")
        if self.min_hit_distance >= self.max_trace_distance:
            raise ValueError("min_hit_distance must be below max_trace_distance")


@dataclass(eq=False)
class RenderResult:
    labels: np.ndarray      # (H, W) uint32
    distance: np.ndarray    # (H, W) float64, inf where nothing was hit
    voxel: np.ndarray       # (H, W) int64 flat voxel index, -1 where nothing was hit


@njit(cache=True)
def _axis_setup(o, d, i, lo, size):
    if d > 0.0:
        return 1, (lo + (i + 1) * size - o) / d, size / d
    if d < 0.0:
        return -1, (lo + i * size - o) / d, -size / d
    return 0, np.inf, np.inf


@njit(cache=True)
def _slab(o, d, lo, hi, t0, t1):
    if d == 0.0:
        if o < lo or o >= hi:
            return 1.0, 0.0
        return t0, t1
    ta = (lo - o) / d
    tb = (hi - o) / d
    if ta > tb:
        ta, tb = tb, ta
    return max(t0, ta), min(t1, tb)


@njit(cache=True)
def _start_index(o, d, t, lo, size, n):
    i = int(np.floor((o + d * t - lo) / size))
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


@njit(cache=True)
def _trace(labels, ox, oy, oz, dx, dy, dz, lo, size, t_min, t_max, max_steps):
    nx, ny, nz = labels.shape
    t0, t1 = _slab(ox, dx, lo[0], lo[0] + nx * size, t_min, t_max)
    t0, t1 = _slab(oy, dy, lo[1], lo[1] + ny * size, t0, t1)
    t0, t1 = _slab(oz, dz, lo[2], lo[2] + nz * size, t0, t1)
    if not t0 < t1:
        return 0, np.inf, -1

    ix = _start_index(ox, dx, t0, lo[0], size, nx)
    iy = _start_index(oy, dy, t0, lo[1], size, ny)
    iz = _start_index(oz, dz, t0, lo[2], size, nz)
    sx, tx, ddx = _axis_setup(ox, dx, ix, lo[0], size)
    sy, ty, ddy = _axis_setup(oy, dy, iy, lo[1], size)
    sz, tz, ddz = _axis_setup(oz, dz, iz, lo[2], size)

    t = t0
    crossings = 0
    while True:
        lab = labels[ix, iy, iz]
        if lab != 0:
            return lab, t, (ix * ny + iy) * nz + iz
        # tied crossings step together: the ray passes through an edge or
        # corner and never enters the voxels beside it
        t = min(tx, ty, tz)
        if t >= t1:
            break
        if tx == t:
            ix += sx
            tx += ddx
        if ty == t:
            iy += sy
            ty += ddy
        if tz == t:
            iz += sz
            tz += ddz
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            break
        crossings += 1
        if max_steps >= 0 and crossings > max_steps:
            break
    return 0, np.inf, -1


@njit(cache=True, parallel=True)
def _render(labels, lo, size, center, rot_t, fx, fy, cx, cy, width, height,
            t_min, t_max, max_steps, out_lab, out_t, out_vox):
    for row in prange(height):
        for col in range(width):
            xc = (col - cx) / fx
            yc = (row - cy) / fy
            dx = rot_t[0, 0] * xc + rot_t[0, 1] * yc + rot_t[0, 2]
            dy = rot_t[1, 0] * xc + rot_t[1, 1] * yc + rot_t[1, 2]
            dz = rot_t[2, 0] * xc + rot_t[2, 1] * yc + rot_t[2, 2]
            n = np.sqrt(dx * dx + dy * dy + dz * dz)
            lab, t, vox = _trace(labels, center[0], center[1], center[2],
                                 dx / n, dy / n, dz / n, lo, size, t_min, t_max, max_steps)
            out_lab[row, col] = lab
            out_t[row, col] = t
            out_vox[row, col] = vox


def _label_grid(vol) -> tuple:
    spec = vol.spec
    labels = np.ascontiguousarray(vol.labels, dtype=np.uint32)
    return spec, labels


def render_view_full(cam: CameraModel, vol, params: RayMarchParams = RayMarchParams(),
                     out_width: Optional[int] = None, out_height: Optional[int] = None) -> RenderResult:
    spec, labels = _label_grid(vol)
    out_width = cam.width if out_width is None else int(out_width)
    out_height = cam.height if out_height is None else int(out_height)
    if out_width < 1 or out_height < 1:
        raise ValueError("output size must be at least 1x1")
    sx = out_width / cam.width
    sy = out_height / cam.height
    k = cam.intrinsics
    out_lab = np.zeros((out_height, out_width), dtype=np.uint32)
    out_t = np.full((out_height, out_width), np.inf)
    out_vox = np.full((out_height, out_width), -1, dtype=np.int64)
    _render(labels, np.asarray(spec.origin, dtype=np.float64), float(spec.voxel_size),
            np.ascontiguousarray(cam.pose.center), np.ascontiguousarray(cam.pose.rotation.T),
            k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, out_width, out_height,
            float(params.min_hit_distance), float(params.max_trace_distance),
            -1 if params.max_steps is None else int(params.max_steps),
            out_lab, out_t, out_vox)
    return RenderResult(out_lab, out_t, out_vox)


def render_view(cam: CameraModel, vol, params: RayMarchParams = RayMarchParams(),
                out_width: Optional[int] = None, out_height: Optional[int] = None) -> np.ndarray:
    """Label image of ``vol`` (LabelVolume or PanopticVolume) seen from ``cam``."""
    return render_view_full(cam, vol, params, out_width, out_height).labels


def trace_rays(vol, origins, directions, params: RayMarchParams = RayMarchParams()):
    """Trace explicit rays; returns ``(labels, distances, voxel indices)``."""
    spec, labels = _label_grid(vol)
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    return _trace_many(labels, np.asarray(spec.origin, dtype=np.float64), float(spec.voxel_size),
                       origins, directions, float(params.min_hit_distance),
                       float(params.max_trace_distance),
                       -1 if params.max_steps is None else int(params.max_steps))


@njit(cache=True)
def _trace_many(labels, lo, size, origins, directions, t_min, t_max, max_steps):
    n = origins.shape[0]
    out_lab = np.zeros(n, np.uint32)
    out_t = np.full(n, np.inf)
    out_vox = np.full(n, -1, np.int64)
    for k in range(n):
        lab, t, vox = _trace(labels, origins[k, 0], origins[k, 1], origins[k, 2],
                             directions[k, 0], directions[k, 1], directions[k, 2],
                             lo, size, t_min, t_max, max_steps)
        out_lab[k] = lab
        out_t[k] = t
        out_vox[k] = vox
    return out_lab, out_t, out_vox
