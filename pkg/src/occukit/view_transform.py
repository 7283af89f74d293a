"""Lifting per-view feature maps into a voxel feature volume.

Each voxel centre is projected into every view with intrinsics scaled to
the feature-map resolution, sampled bilinearly where it lands inside the
map, and the valid samples are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import FEATURE_SCALE
from .geometry import CameraModel, VoxelGridSpec, bilinear_sample_many, project_points


@dataclass(eq=False)
class FeatureVolume:
    values: np.ndarray        # (C, X, Y, Z)
    valid_count: np.ndarray   # (X, Y, Z) int
    spec: VoxelGridSpec = None

    @property
    def channels(self) -> int:
        return self.values.shape[0]


def _frustum(cam: CameraModel, centers: np.ndarray, feat_hw, scale):
    uv, depth = project_points(cam, centers, scale)
    h, w = feat_hw
    with np.errstate(invalid="ignore"):
        ok = (depth > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    return ok, uv


def frustum_mask(cam: CameraModel, spec: VoxelGridSpec, feat_dims, scale: float = FEATURE_SCALE) -> np.ndarray:
    """True where the voxel centre lands in ``[0, W') x [0, H')`` in front of the camera.

    ``feat_dims`` is ``(H', W')``.
    """
    ok, _ = _frustum(cam, spec.centers().reshape(-1, 3), feat_dims, scale)
    return ok.reshape(spec.dims)


def lift_features(cams: Sequence[CameraModel], maps: Sequence[np.ndarray], spec: VoxelGridSpec,
                  scale: float = FEATURE_SCALE, strict_eq1: bool = False) -> FeatureVolume:
    """Average valid bilinear samples over views.

    With ``strict_eq1`` the sum is divided by the number of views N instead
    of by the per-voxel count of views that see the voxel.
    """
    cams = list(cams)
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if len(cams) != len(maps):
        raise ValueError(f"{len(cams)} cameras but {len(maps)} feature maps")
    if not cams:
        raise ValueError("need at least one view")
    maps = [m[None] if m.ndim == 2 else m for m in maps]
    if any(m.ndim != 3 for m in maps):
        raise ValueError("feature maps must be (C, H, W)")
    channels = maps[0].shape[0]
    if any(m.shape[0] != channels for m in maps):
        raise ValueError("feature maps disagree on channel count")

    centers = spec.centers().reshape(-1, 3)
    n_vox = len(centers)
    mean = np.zeros((n_vox, channels))
    count = np.zeros(n_vox, dtype=np.int64)
    for cam, fmap in zip(cams, maps):
        ok, uv = _frustum(cam, centers, fmap.shape[1:], scale)
        if not ok.any():
            continue
        samples = bilinear_sample_many(fmap, uv[ok, 0], uv[ok, 1])
        count[ok] += 1
        # running mean keeps constant inputs exact
        mean[ok] += (samples - mean[ok]) / count[ok, None]

    if strict_eq1:
        mean *= (count / len(cams))[:, None]
    values = mean.T.reshape((channels,) + spec.dims)
    return FeatureVolume(values, count.reshape(spec.dims), spec)
