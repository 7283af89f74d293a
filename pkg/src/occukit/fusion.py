"""Occupancy label generation from labelled depth maps.

Every labelled pixel is lifted to a world point, the clouds of all views are
pooled, cropped to the area of interest and voxelised by per-voxel majority
vote.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .config import NUM_SEMANTIC_CLASSES, SemanticClass, priority_array
from .geometry import CameraModel, VoxelGridSpec, backproject_pixels, world_to_voxel_indices
from .volumes import LabelVolume


@dataclass(frozen=True)
class LabeledPoint:
    position: tuple
    semantic_label: SemanticClass
    instance_id: Optional[int] = None

    def __post_init__(self):
        is_ped = self.semantic_label == SemanticClass.PEDESTRIAN
        if is_ped != (self.instance_id is not None and self.instance_id > 0):
            raise ValueError("instance_id must be set exactly for pedestrian points")


@dataclass(eq=False)
class PointCloud:
    """Column-wise store of labelled points (N,3 positions; labels; instance ids, 0 = none)."""

    positions: np.ndarray
    labels: np.ndarray
    instances: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.uint8).ravel()
        self.instances = np.asarray(self.instances, dtype=np.uint32).ravel()
        n = len(self.positions)
        if len(self.labels) != n or len(self.instances) != n:
            raise ValueError("positions, labels and instances differ in length")

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 3)), np.empty(0), np.empty(0))

    @classmethod
    def from_points(cls, points: Iterable[LabeledPoint]) -> "PointCloud":
        points = list(points)
        if not points:
            return cls.empty()
        return cls(
            [p.position for p in points],
            [int(p.semantic_label) for p in points],
            [p.instance_id or 0 for p in points],
        )

    @classmethod
    def concat(cls, clouds: Sequence["PointCloud"]) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.labels for c in clouds]),
            np.concatenate([c.instances for c in clouds]),
        )

    def __len__(self) -> int:
        return len(self.positions)

    def __iter__(self) -> Iterator[LabeledPoint]:
        for p, lab, inst in zip(self.positions, self.labels, self.instances):
            yield LabeledPoint(tuple(p), SemanticClass(int(lab)), int(inst) if inst else None)


def depth_to_points(cam: CameraModel, depth_map, semantic_map, instance_map=None) -> PointCloud:
    depth_map = np.asarray(depth_map, dtype=np.float64)
    semantic_map = np.asarray(semantic_map)
    if instance_map is None:
        instance_map = np.zeros(semantic_map.shape, dtype=np.uint32)
    instance_map = np.asarray(instance_map)
    expected = (cam.height, cam.width)
    for name, m in (("depth", depth_map), ("semantic", semantic_map), ("instance", instance_map)):
        if m.shape != expected:
            raise ValueError(f"{name} map has shape {m.shape}, camera expects {expected}")

    keep = np.isfinite(depth_map) & (depth_map > 0) & (semantic_map != SemanticClass.FREE)
    v, u = np.nonzero(keep)
    pts = backproject_pixels(cam, u, v, depth_map[v, u])
    labels = semantic_map[v, u].astype(np.uint8)
    inst = np.where(labels == SemanticClass.PEDESTRIAN, instance_map[v, u], 0)
    return PointCloud(pts, labels, inst)


def _inside_box(pts: np.ndarray, aoi) -> np.ndarray:
    lo = np.asarray(aoi[0], dtype=np.float64)
    hi = np.asarray(aoi[1], dtype=np.float64)
    return np.all((pts >= lo) & (pts < hi), axis=1)


def fuse_and_voxelize(clouds: Sequence[PointCloud], spec: VoxelGridSpec, aoi=None) -> LabelVolume:
    """Vote pooled points into a label volume.

    ``aoi`` is a ``(lo, hi)`` world box, half-open; defaults to the grid
    extent. Each voxel takes its most frequent label; equal counts resolve by
    ``LABEL_PRIORITY``. Pedestrian voxels take their most frequent instance id,
    smaller id on ties. The result does not depend on view or point order.
    """
    cloud = PointCloud.concat(clouds) if not isinstance(clouds, PointCloud) else clouds
    vol = LabelVolume.empty(spec)
    if len(cloud) == 0:
        return vol

    mask = cloud.labels != SemanticClass.FREE
    if aoi is not None:
        mask &= _inside_box(cloud.positions, aoi)
    idx, inside = world_to_voxel_indices(spec, cloud.positions)
    mask &= inside
    if not mask.any():
        return vol

    nx, ny, nz = spec.dims
    flat = (idx[mask, 0] * ny + idx[mask, 1]) * nz + idx[mask, 2]
    labels = cloud.labels[mask].astype(np.int64)
    n_vox = spec.num_voxels

    counts = np.bincount(flat * NUM_SEMANTIC_CLASSES + labels,
                         minlength=n_vox * NUM_SEMANTIC_CLASSES)
    counts = counts.reshape(n_vox, NUM_SEMANTIC_CLASSES)
    score = counts * 8 + priority_array()[None, :]
    score[counts == 0] = -1
    winner = np.argmax(score, axis=1)
    winner[counts.sum(axis=1) == 0] = SemanticClass.FREE
    out = winner.astype(np.uint8)

    inst_out = np.zeros(n_vox, dtype=np.uint32)
    ped = (labels == SemanticClass.PEDESTRIAN) & (cloud.instances[mask] > 0)
    if ped.any():
        pv = flat[ped]
        pi = cloud.instances[mask][ped].astype(np.int64)
        pairs, pair_counts = np.unique(np.stack([pv, pi], axis=1), axis=0, return_counts=True)
        # best per voxel: highest count, then smallest id
        order = np.lexsort((pairs[:, 1], -pair_counts, pairs[:, 0]))
        pairs = pairs[order]
        first = np.ones(len(pairs), dtype=bool)
        first[1:] = pairs[1:, 0] != pairs[:-1, 0]
        best = pairs[first]
        is_ped_voxel = out[best[:, 0]] == SemanticClass.PEDESTRIAN
        inst_out[best[is_ped_voxel, 0]] = best[is_ped_voxel, 1]

    out = out.reshape(spec.dims)
    inst_out = inst_out.reshape(spec.dims)
    if aoi is not None:
        outside = ~_inside_box(spec.centers().reshape(-1, 3), aoi).reshape(spec.dims)
        out[outside] = SemanticClass.FREE
        inst_out[outside] = 0
    return LabelVolume(spec, out, inst_out)


def fuse_views(cams: Sequence[CameraModel], depth_maps, semantic_maps, instance_maps,
               spec: VoxelGridSpec, aoi=None) -> LabelVolume:
    clouds = [depth_to_points(c, d, s, i)
              for c, d, s, i in zip(cams, depth_maps, semantic_maps, instance_maps)]
    return fuse_and_voxelize(clouds, spec, aoi)
