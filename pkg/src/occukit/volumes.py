"""Dense label volumes shared by fusion, grouping, rendering and io."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import PANOPTIC_THING_OFFSET, SemanticClass
from .geometry import VoxelGridSpec


def _check_shape(spec: VoxelGridSpec, arr: np.ndarray, what: str):
    if arr.shape != spec.dims:
        raise ValueError(f"{what} shape {arr.shape} does not match grid dims {spec.dims}")


@dataclass(eq=False)
class LabelVolume:
    """Semantic labels (uint8) plus optional per-voxel instance ids (uint32, 0 = none)."""

    spec: VoxelGridSpec
    labels: np.ndarray
    instances: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        _check_shape(self.spec, self.labels, "labels")
        if self.instances is None:
            self.instances = np.zeros(self.spec.dims, dtype=np.uint32)
        else:
            self.instances = np.asarray(self.instances, dtype=np.uint32)
            _check_shape(self.spec, self.instances, "instances")
        stray = (self.instances != 0) & (self.labels != SemanticClass.PEDESTRIAN)
        if stray.any():
            raise ValueError("instance ids present on non-pedestrian voxels")

    @classmethod
    def empty(cls, spec: VoxelGridSpec) -> "LabelVolume":
        return cls(spec, np.zeros(spec.dims, dtype=np.uint8))

    def __eq__(self, other):
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return (self.spec == other.spec and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.instances, other.instances))


@dataclass(eq=False)
class InstanceVolume:
    """Per-voxel pedestrian instance index in ``1..N_p``; 0 means unassigned."""

    spec: VoxelGridSpec
    ids: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint32)
        _check_shape(self.spec, self.ids, "ids")

    @property
    def num_instances(self) -> int:
        return int(np.unique(self.ids[self.ids > 0]).size)

    def __eq__(self, other):
        if not isinstance(other, InstanceVolume):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.ids, other.ids)


@dataclass(eq=False)
class PanopticVolume:
    """Free (0), stuff classes by semantic id, pedestrians as offset + instance id."""

    spec: VoxelGridSpec
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint32)
        _check_shape(self.spec, self.labels, "labels")
        stuff = self.labels < PANOPTIC_THING_OFFSET
        bad = (stuff & ((self.labels == SemanticClass.PEDESTRIAN) | (self.labels >= len(SemanticClass)))) \
            | (self.labels == PANOPTIC_THING_OFFSET)
        if bad.any():
            raise ValueError(f"invalid panoptic code {int(self.labels[bad][0])}: pedestrians "
                             f"are {PANOPTIC_THING_OFFSET} + instance id")

    def semantic(self) -> np.ndarray:
        return panoptic_to_semantic(self.labels)

    def instance_ids(self) -> np.ndarray:
        return panoptic_to_instances(self.labels)

    def __eq__(self, other):
        if not isinstance(other, PanopticVolume):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.labels, other.labels)


def panoptic_to_semantic(pan: np.ndarray) -> np.ndarray:
    pan = np.asarray(pan)
    sem = np.where(pan >= PANOPTIC_THING_OFFSET, int(SemanticClass.PEDESTRIAN), pan)
    return sem.astype(np.uint8)


def panoptic_to_instances(pan: np.ndarray) -> np.ndarray:
    pan = np.asarray(pan, dtype=np.int64)
    return np.where(pan >= PANOPTIC_THING_OFFSET, pan - PANOPTIC_THING_OFFSET, 0).astype(np.uint32)


def compose_panoptic(semantic: np.ndarray, instances: np.ndarray) -> np.ndarray:
    """Panoptic encoding of a semantic map with instance ids; unassigned pedestrians -> Free."""
    semantic = np.asarray(semantic)
    instances = np.asarray(instances, dtype=np.int64)
    ped = semantic == SemanticClass.PEDESTRIAN
    out = semantic.astype(np.uint32)
    out[ped] = 0
    assigned = ped & (instances > 0)
    out[assigned] = (instances[assigned] + PANOPTIC_THING_OFFSET).astype(np.uint32)
    return out
