"""Default constants shared across the pipeline.

Values that come from the published method are grouped first; the rest are
choices made for this package where the method leaves a value open.
"""

from enum import IntEnum

import numpy as np


class SemanticClass(IntEnum):
    FREE = 0
    PEDESTRIAN = 1
    GROUND = 2
    WALL = 3
    OTHERS = 4


NUM_SEMANTIC_CLASSES = 5
STUFF_CLASSES = (SemanticClass.GROUND, SemanticClass.WALL, SemanticClass.OTHERS)
BACKGROUND_CLASSES = STUFF_CLASSES
VIEW_CLASSES = (SemanticClass.FREE, SemanticClass.PEDESTRIAN, SemanticClass.GROUND)

# Panoptic labels: 0 Free, stuff keeps its semantic id, pedestrians are
# PANOPTIC_THING_OFFSET + instance id.
PANOPTIC_THING_OFFSET = 1000

# Published constants.
VOXEL_SIZE = 0.10
DETECTION_THRESHOLD = 0.5       # tau
GROUPING_RADIUS = 0.5           # r, metres
MATCH_DISTANCE = 0.5            # t, metres
FEATURE_SCALE = 0.25
AP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
VIEW_AP_THRESHOLDS = tuple(round(0.25 + 0.05 * i, 2) for i in range(10))
PQ_MATCH_IOU = 0.5
RAYMARCH_STEPS = 50
MIN_HIT_DISTANCE = 0.10
MAX_TRACE_DISTANCE = 50.0
LAMBDA_WCE = 0.4
LAMBDA_LOVASZ = 0.3
LAMBDA_AFFINITY = 0.3
LAMBDA_2D = 0.3

# Chosen defaults.
GAUSSIAN_SIGMA = 0.3  # three voxels
NMS_RADIUS = 0.5
CLASS_WEIGHT_EPS = 1e-3

# Higher wins when a voxel receives equally many votes for two labels.
LABEL_PRIORITY = {
    SemanticClass.FREE: 0,
    SemanticClass.GROUND: 1,
    SemanticClass.OTHERS: 2,
    SemanticClass.WALL: 3,
    SemanticClass.PEDESTRIAN: 4,
}

DEFAULT_PALETTE = {
    0: (0, 0, 0),
    1: (220, 20, 60),
    2: (128, 64, 128),
    3: (102, 102, 156),
    4: (190, 153, 153),
}


def priority_array() -> np.ndarray:
    out = np.zeros(NUM_SEMANTIC_CLASSES, dtype=np.int64)
    for cls, rank in LABEL_PRIORITY.items():
        out[int(cls)] = rank
    return out


def snapshot() -> dict:
    """All pinned defaults as a plain dict (used by the CLI and tests)."""
    return {
        "voxel_size": VOXEL_SIZE,
        "tau": DETECTION_THRESHOLD,
        "grouping_radius": GROUPING_RADIUS,
        "match_distance": MATCH_DISTANCE,
        "feature_scale": FEATURE_SCALE,
        "ap_thresholds": list(AP_THRESHOLDS),
        "view_ap_thresholds": list(VIEW_AP_THRESHOLDS),
        "pq_match_iou": PQ_MATCH_IOU,
        "raymarch_steps": RAYMARCH_STEPS,
        "min_hit_distance": MIN_HIT_DISTANCE,
        "max_trace_distance": MAX_TRACE_DISTANCE,
        "lambda_wce": LAMBDA_WCE,
        "lambda_lovasz": LAMBDA_LOVASZ,
        "lambda_affinity": LAMBDA_AFFINITY,
        "lambda_2d": LAMBDA_2D,
        "gaussian_sigma": GAUSSIAN_SIGMA,
        "nms_radius": NMS_RADIUS,
        "class_weight_eps": CLASS_WEIGHT_EPS,
    }
