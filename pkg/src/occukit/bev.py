"""Ground-plane occupancy: BEV collapse, target splatting, MSE, peak extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import DETECTION_THRESHOLD, GAUSSIAN_SIGMA, NMS_RADIUS
from .geometry import VoxelGridSpec


@dataclass(eq=False)
class BevMap:
    """Scores over the (X, Y) columns of a voxel grid."""

    values: np.ndarray
    origin: tuple = (0.0, 0.0)
    cell_size: float = 0.1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"BEV map must be 2-D, got shape {self.values.shape}")
        self.origin = tuple(float(x) for x in self.origin[:2])

    @classmethod
    def for_grid(cls, spec: VoxelGridSpec, values=None) -> "BevMap":
        if values is None:
            values = np.zeros(spec.dims[:2])
        return cls(values, spec.origin[:2], spec.voxel_size)

    @property
    def dims(self) -> tuple:
        return self.values.shape

    def cell_centers(self) -> np.ndarray:
        xs = self.origin[0] + (np.arange(self.dims[0]) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.dims[1]) + 0.5) * self.cell_size
        return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class Detection:
    x: float
    y: float
    score: float


def collapse_to_bev(volume) -> np.ndarray:
    """Mean over the vertical axis. Accepts a FeatureVolume or a (C, X, Y, Z) array."""
    values = getattr(volume, "values", volume)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] < 1:
        raise ValueError("volume has no vertical extent")
    return values.mean(axis=-1)


def splat_gaussian(locations, spec, sigma: float = GAUSSIAN_SIGMA) -> BevMap:
    """Max-combined Gaussian bumps ``exp(-d^2 / 2 sigma^2)`` around each location."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    out = spec if isinstance(spec, BevMap) else BevMap.for_grid(spec)
    out = BevMap(np.zeros(out.dims), out.origin, out.cell_size)
    locs = np.asarray(locations, dtype=np.float64).reshape(-1, 2) if len(locations) else np.empty((0, 2))
    if len(locs) == 0:
        return out
    centers = out.cell_centers()
    reach = 6.0 * sigma
    span = int(np.ceil(reach / out.cell_size)) + 1
    nx, ny = out.dims
    for x, y in locs:
        ix = int(np.floor((x - out.origin[0]) / out.cell_size))
        iy = int(np.floor((y - out.origin[1]) / out.cell_size))
        x0, x1 = max(ix - span, 0), min(ix + span + 1, nx)
        y0, y1 = max(iy - span, 0), min(iy + span + 1, ny)
        if x0 >= x1 or y0 >= y1:
            continue
        c = centers[x0:x1, y0:y1]
        d2 = (c[..., 0] - x) ** 2 + (c[..., 1] - y) ** 2
        np.maximum(out.values[x0:x1, y0:y1], np.exp(-d2 / (2 * sigma * sigma)),
                   out=out.values[x0:x1, y0:y1])
    return out


def mse_loss(pred, target):
    """Return ``(mean squared error, gradient w.r.t. pred)``."""
    p = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    t = np.asarray(getattr(target, "values", target), dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def extract_locations(pocc: BevMap, tau: float = DETECTION_THRESHOLD,
                      nms_radius: float = NMS_RADIUS) -> list:
    """Peaks of the occupancy map at or above ``tau``.

    Cells are ranked by descending score, then ascending ``(ix, iy)``. A cell
    is kept when no higher-ranked cell lies within ``nms_radius`` of it, so
    kept detections are pairwise further apart than ``nms_radius``.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if not nms_radius > 0:
        raise ValueError(f"nms_radius must be positive, got {nms_radius}")
    scores = pocc.values
    ix, iy = np.nonzero(scores >= tau)
    if len(ix) == 0:
        return []
    s = scores[ix, iy]
    order = np.lexsort((iy, ix, -s))

    r = int(np.floor(nms_radius / pocc.cell_size + 1e-9))
    offs = np.arange(-r, r + 1)
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    footprint = (ox * ox + oy * oy) * pocc.cell_size ** 2 <= nms_radius ** 2 + 1e-12

    nx, ny = scores.shape
    seen = np.zeros((nx + 2 * r, ny + 2 * r), dtype=bool)
    kept = []
    centers_x = pocc.origin[0] + (ix + 0.5) * pocc.cell_size
    centers_y = pocc.origin[1] + (iy + 0.5) * pocc.cell_size
    for k in order:
        a, b = ix[k], iy[k]
        window = seen[a:a + 2 * r + 1, b:b + 2 * r + 1]
        if not (window & footprint).any():
            kept.append(Detection(float(centers_x[k]), float(centers_y[k]), float(s[k])))
        seen[a + r, b + r] = True
    return kept
