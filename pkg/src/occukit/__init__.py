"""Multi-view pedestrian occupancy toolkit: geometry, label fusion, feature
lifting, BEV detection, instance grouping, voxel ray marching, losses and
evaluation metrics, with an analytic scene generator for reference data."""

from .config import SemanticClass
from .geometry import CameraIntrinsics, CameraModel, CameraPose, VoxelGridSpec
from .volumes import InstanceVolume, LabelVolume, PanopticVolume

__version__ = "0.1.0"

__all__ = [
    "SemanticClass", "CameraIntrinsics", "CameraModel", "CameraPose", "VoxelGridSpec",
    "LabelVolume", "InstanceVolume", "PanopticVolume", "__version__",
]
