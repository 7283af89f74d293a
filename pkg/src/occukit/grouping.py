"""Pedestrian instance grouping and panoptic merge."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .config import GROUPING_RADIUS, SemanticClass
from .volumes import InstanceVolume, LabelVolume, PanopticVolume, compose_panoptic


def _as_xy(detections) -> np.ndarray:
    if len(detections) == 0:
        return np.empty((0, 2))
    first = detections[0]
    if hasattr(first, "x"):
        return np.array([[d.x, d.y] for d in detections], dtype=np.float64)
    return np.asarray(detections, dtype=np.float64).reshape(len(detections), -1)[:, :2]


def normalize_detections(detections) -> np.ndarray:
    """Planar locations sorted by (x, y); row k becomes instance id k + 1."""
    xy = _as_xy(detections)
    if len(xy) == 0:
        return xy
    return xy[np.lexsort((xy[:, 1], xy[:, 0]))]


def nearest_location(points_xy: np.ndarray, locations_xy: np.ndarray, r: float):
    """Index of the nearest location per point, or -1 when none is closer than ``r``.

    Equidistant locations resolve to the lowest index.
    """
    points_xy = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2)
    out = np.full(len(points_xy), -1, dtype=np.int64)
    if len(locations_xy) == 0 or len(points_xy) == 0:
        return out
    best_d = np.full(len(points_xy), np.inf)
    # loop over locations keeps memory at O(points); strict < keeps the lowest index on ties
    for j, (lx, ly) in enumerate(locations_xy):
        d = np.hypot(points_xy[:, 0] - lx, points_xy[:, 1] - ly)
        better = d < best_d
        best_d[better] = d[better]
        out[better] = j
    out[~(best_d < r)] = -1
    return out


def group_instances(sem: LabelVolume, detections, r: float = GROUPING_RADIUS) -> InstanceVolume:
    """Assign each Pedestrian voxel to the nearest detection (planar distance < r).

    Instance ids are ``1..N_p`` in (x, y)-sorted detection order.
    """
    if not r > 0:
        raise ValueError(f"grouping radius must be positive, got {r}")
    spec = sem.spec
    ids = np.zeros(spec.dims, dtype=np.uint32)
    locs = normalize_detections(detections)
    ped = sem.labels == SemanticClass.PEDESTRIAN
    if len(locs) == 0 or not ped.any():
        return InstanceVolume(spec, ids)

    # assignment depends only on the column, so solve once per (x, y) column
    cols = ped.any(axis=2)
    cx, cy = np.nonzero(cols)
    centers = spec.column_centers()[cx, cy]
    col_ids = nearest_location(centers, locs, r) + 1
    column_map = np.zeros(spec.dims[:2], dtype=np.uint32)
    column_map[cx, cy] = col_ids
    ids = np.where(ped, column_map[:, :, None], 0).astype(np.uint32)
    return InstanceVolume(spec, ids)


def merge_panoptic(sem: LabelVolume, inst: InstanceVolume) -> PanopticVolume:
    if sem.spec != inst.spec:
        raise ValueError("semantic and instance volumes use different grids")
    return PanopticVolume(sem.spec, compose_panoptic(sem.labels, inst.ids))


def semantic_from_panoptic(pan: PanopticVolume) -> LabelVolume:
    return LabelVolume(pan.spec, pan.semantic(), pan.instance_ids())
