"""Procedural analytic scenes used as ground truth.

A scene is a ground slab, four boundary walls, a few "Others" boxes and
non-overlapping vertical capsules standing in for pedestrians. Everything
has closed-form ray intersections and point-membership tests, so sensor
renders and voxelisations can be computed exactly.

Box faces are snapped to voxel-centre planes. Surface points of a box then
fall strictly inside the voxel that the centre test assigns to the box,
which keeps fused labels and analytic labels comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .config import VOXEL_SIZE, SemanticClass, priority_array
from .geometry import CameraIntrinsics, CameraModel, VoxelGridSpec, look_at
from .volumes import LabelVolume

CAPSULE_RADIUS = (0.15, 0.35)
CAPSULE_HEIGHT = (1.5, 2.0)


class SceneError(RuntimeError):
    pass


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo} {self.hi}")


@dataclass(frozen=True)
class Capsule:
    """Vertical capsule standing at ``(x, y)`` from ``z0`` up to ``z0 + height``."""

    x: float
    y: float
    z0: float
    radius: float
    height: float

    def __post_init__(self):
        if not self.height > 2 * self.radius > 0:
            raise ValueError("capsule height must exceed its diameter")

    @property
    def segment(self) -> tuple:
        return self.z0 + self.radius, self.z0 + self.height - self.radius

    @property
    def volume(self) -> float:
        a, b = self.segment
        return np.pi * self.radius ** 2 * (b - a) + 4.0 / 3.0 * np.pi * self.radius ** 3


@dataclass(frozen=True)
class ScenePrimitive:
    shape: Union[Box, Capsule]
    semantic_label: SemanticClass
    instance_id: Optional[int] = None

    def __post_init__(self):
        is_ped = self.semantic_label == SemanticClass.PEDESTRIAN
        if is_ped != (self.instance_id is not None):
            raise ValueError("instance_id is required for pedestrians and only for them")
        if is_ped and not isinstance(self.shape, Capsule):
            raise ValueError("pedestrians are capsules")


# name: (x size, y size, cameras, pedestrians)
SCENE_PRESETS = {
    "alley": (18.0, 45.0, 6, 60),
    "plaza": (15.0, 46.0, 3, 50),
    "field": (29.0, 40.0, 4, 40),
    "park": (48.0, 43.0, 8, 100),
    "facade": (36.0, 12.0, 7, 40),
}


@dataclass
class SceneConfig:
    extent: tuple = (20.0, 20.0)
    height: float = 3.0
    num_pedestrians: int = 10
    num_others: int = 4
    num_cameras: int = 5
    image_size: tuple = (640, 360)
    seed: int = 0
    voxel_size: float = VOXEL_SIZE
    wall_thickness: float = 0.3
    wall_height: float = 2.4
    min_gap: float = 0.2
    cameras: Optional[list] = None

    def __post_init__(self):
        if len(self.extent) != 2 or min(self.extent) <= 0 or self.height <= 0:
            raise ValueError("scene extents must be positive")
        if self.num_cameras < 1 and not self.cameras:
            raise ValueError("need at least one camera")
        if self.num_pedestrians < 0 or self.num_others < 0:
            raise ValueError("object counts must be non-negative")

    @classmethod
    def preset(cls, name: str, **overrides) -> "SceneConfig":
        sx, sy, n_cam, n_ped = SCENE_PRESETS[name]
        kw = dict(extent=(sx, sy), num_cameras=n_cam, num_pedestrians=n_ped)
        kw.update(overrides)
        return cls(**kw)

    def grid_spec(self) -> VoxelGridSpec:
        return VoxelGridSpec.from_bounds((0.0, 0.0, 0.0), (*self.extent, self.height), self.voxel_size)

    def to_dict(self) -> dict:
        return {
            "extent": list(self.extent), "height": self.height,
            "num_pedestrians": self.num_pedestrians, "num_others": self.num_others,
            "num_cameras": self.num_cameras, "image_size": list(self.image_size),
            "seed": self.seed, "voxel_size": self.voxel_size,
            "wall_thickness": self.wall_thickness, "wall_height": self.wall_height,
            "min_gap": self.min_gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        d["extent"] = tuple(d["extent"])
        d["image_size"] = tuple(d["image_size"])
        return cls(**d)


def _snap(value: float, vs: float) -> float:
    """Centre plane of the voxel containing ``value``, computed the way grid centres are."""
    return 0.0 + (int(np.floor(value / vs)) + 0.5) * vs


def _static_scene(config: SceneConfig, rng: np.random.Generator) -> list:
    vs = config.voxel_size
    sx, sy = config.extent
    half = 0.5 * vs
    prims = []
    ground_top = half
    prims.append(ScenePrimitive(
        Box((half, half, -5 * vs + half), (sx - half, sy - half, ground_top)), SemanticClass.GROUND))

    th = config.wall_thickness
    top = _snap(min(config.wall_height, config.height - vs), vs)
    inner_x = (_snap(th, vs), _snap(sx - th, vs))
    inner_y = (_snap(th, vs), _snap(sy - th, vs))
    for lo, hi in (
        ((half, half, ground_top), (inner_x[0], sy - half, top)),
        ((inner_x[1], half, ground_top), (sx - half, sy - half, top)),
        ((inner_x[0], half, ground_top), (inner_x[1], inner_y[0], top)),
        ((inner_x[0], inner_y[1], ground_top), (inner_x[1], sy - half, top)),
    ):
        prims.append(ScenePrimitive(Box(lo, hi), SemanticClass.WALL))

    margin = 1.5
    room = min(sx, sy) - 2 * margin
    if config.num_others and room < 0.5:
        raise SceneError(f"extent {config.extent} leaves no room for obstacles inside the walls")
    placed = []
    for _ in range(config.num_others):
        for _attempt in range(200):
            w, d = rng.uniform(0.5, min(2.0, room), size=2)
            h = rng.uniform(0.4, 1.5)
            x0 = rng.uniform(margin, sx - margin - w)
            y0 = rng.uniform(margin, sy - margin - d)
            lo = (_snap(x0, vs), _snap(y0, vs), ground_top)
            hi = (_snap(x0 + w, vs), _snap(y0 + d, vs), _snap(ground_top + h, vs))
            if any(hi[0] + 0.5 > b.lo[0] and b.hi[0] + 0.5 > lo[0]
                   and hi[1] + 0.5 > b.lo[1] and b.hi[1] + 0.5 > lo[1] for b in placed):
                continue
            box = Box(lo, hi)
            placed.append(box)
            prims.append(ScenePrimitive(box, SemanticClass.OTHERS))
            break
    return prims


def _box_xy_distance(box: Box, x: float, y: float) -> float:
    dx = max(box.lo[0] - x, 0.0, x - box.hi[0])
    dy = max(box.lo[1] - y, 0.0, y - box.hi[1])
    return float(np.hypot(dx, dy))


def sample_scene(config: SceneConfig, frame: int = 0, max_attempts: int = 2000) -> list:
    """Deterministic primitive list for ``config.seed``.

    The static layout depends on the seed only; pedestrians are drawn per
    ``frame``.
    """
    prims = _static_scene(config, np.random.default_rng(config.seed))
    rng = np.random.default_rng([config.seed, 2, frame])
    obstacles = [p.shape for p in prims if p.semantic_label == SemanticClass.OTHERS]
    sx, sy = config.extent
    ground_top = 0.5 * config.voxel_size
    margin = config.wall_thickness + config.min_gap
    peds: list[Capsule] = []
    if config.num_pedestrians and min(sx, sy) - 2 * (margin + CAPSULE_RADIUS[1]) < 0:
        raise SceneError(f"extent {config.extent} leaves no room for pedestrians inside the walls")
    for k in range(config.num_pedestrians):
        for _attempt in range(max_attempts):
            r = rng.uniform(*CAPSULE_RADIUS)
            h = rng.uniform(*CAPSULE_HEIGHT)
            x = rng.uniform(margin + r, sx - margin - r)
            y = rng.uniform(margin + r, sy - margin - r)
            # axis spacing keeps every voxel of a pedestrian closer to its own axis
            if any(np.hypot(x - c.x, y - c.y) < 2 * max(r, c.radius) + config.min_gap for c in peds):
                continue
            if any(_box_xy_distance(b, x, y) < r + config.min_gap for b in obstacles):
                continue
            peds.append(Capsule(float(x), float(y), ground_top, float(r), float(h)))
            break
        else:
            raise SceneError(
                f"could not place pedestrian {k + 1} of {config.num_pedestrians} "
                f"after {max_attempts} attempts; scene too crowded")
    for i, c in enumerate(peds, start=1):
        prims.append(ScenePrimitive(c, SemanticClass.PEDESTRIAN, i))
    return prims


def make_rig(config: SceneConfig) -> list:
    """Side cameras along the walls looking inwards plus one overhead camera."""
    if config.cameras:
        return list(config.cameras)
    rng = np.random.default_rng([config.seed, 1])
    w, h = config.image_size
    sx, sy = config.extent
    inset = config.wall_thickness + 0.5
    n_side = max(config.num_cameras - 1, 0)
    perimeter = 2 * ((sx - 2 * inset) + (sy - 2 * inset))
    cams = []
    for i in range(n_side):
        s = (i + 0.5) / n_side * perimeter
        a, b = sx - 2 * inset, sy - 2 * inset
        if s < a:
            x, y = inset + s, inset
        elif s < a + b:
            x, y = sx - inset, inset + (s - a)
        elif s < 2 * a + b:
            x, y = sx - inset - (s - a - b), sy - inset
        else:
            x, y = inset, sy - inset - (s - 2 * a - b)
        z = rng.uniform(2.5, 6.0)
        target = (sx / 2 + rng.uniform(-0.1, 0.1) * sx, sy / 2 + rng.uniform(-0.1, 0.1) * sy, 0.0)
        fx = w / 2.0 / np.tan(np.radians(45.0))
        k = CameraIntrinsics(fx, fx, (w - 1) / 2.0, (h - 1) / 2.0, w, h)
        cams.append(CameraModel(k, look_at((x, y, z), target), f"cam{i:02d}"))
    fx = w / 2.0 / np.tan(np.radians(60.0))
    k = CameraIntrinsics(fx, fx, (w - 1) / 2.0, (h - 1) / 2.0, w, h)
    overhead = look_at((sx / 2, sy / 2, 8.0), (sx / 2, sy / 2, 0.0), up=(0.0, 1.0, 0.0))
    cams.append(CameraModel(k, overhead, f"cam{n_side:02d}"))
    return cams


# ---------------------------------------------------------------- ray casting

def _ray_box(o, d, box: Box):
    t0 = np.zeros(len(d))
    t1 = np.full(len(d), np.inf)
    for a in range(3):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (box.lo[a] - o[a]) / d[:, a]
            tb = (box.hi[a] - o[a]) / d[:, a]
        par = d[:, a] == 0
        inside = (o[a] >= box.lo[a]) & (o[a] <= box.hi[a])
        ta = np.where(par, -np.inf if inside else np.inf, ta)
        tb = np.where(par, np.inf if inside else -np.inf, tb)
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return np.where((t0 <= t1) & (t0 > 0), t0, np.inf)


def _quadratic_first(a, b, c):
    disc = b * b - 4 * a * c
    ok = (disc >= 0) & (a > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t = (-b - sq) / (2 * a)
    return np.where(ok & (t > 0), t, np.inf)


def _ray_capsule(o, d, cap: Capsule):
    za, zb = cap.segment
    r = cap.radius
    ox, oy = o[0] - cap.x, o[1] - cap.y
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2 * (ox * d[:, 0] + oy * d[:, 1])
    c = ox * ox + oy * oy - r * r
    t_cyl = _quadratic_first(a, b, np.full_like(a, c))
    z = o[2] + t_cyl * d[:, 2]
    t_cyl = np.where((z >= za) & (z <= zb), t_cyl, np.inf)
    best = t_cyl
    aa = np.einsum("ij,ij->i", d, d)
    for zc in (za, zb):
        oc = np.array([ox, oy, o[2] - zc])
        bb = 2 * d @ oc
        cc = np.full_like(aa, oc @ oc - r * r)
        best = np.minimum(best, _quadratic_first(aa, bb, cc))
    return best


def intersect(primitive: ScenePrimitive, origin, directions) -> np.ndarray:
    """Ray parameter of the first entry hit (inf on miss) for rays ``origin + t d``."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    if isinstance(primitive.shape, Box):
        return _ray_box(o, d, primitive.shape)
    return _ray_capsule(o, d, primitive.shape)


def pixel_rays(cam: CameraModel, width: int, height: int):
    """World-space rays whose camera-z component is 1, so ray t equals depth."""
    k = cam.intrinsics
    sx, sy = width / cam.width, height / cam.height
    v, u = np.mgrid[0:height, 0:width]
    xc = np.stack([(u.ravel() - k.cx * sx) / (k.fx * sx),
                   (v.ravel() - k.cy * sy) / (k.fy * sy),
                   np.ones(u.size)], axis=1)
    return cam.pose.center, xc @ cam.pose.rotation


def render_sensors(cam: CameraModel, primitives: Sequence[ScenePrimitive],
                   width: Optional[int] = None, height: Optional[int] = None):
    """Exact depth / semantic / instance images.

    Depth is camera-space z (inf on background); background is Free with
    instance 0.
    """
    width = cam.width if width is None else width
    height = cam.height if height is None else height
    origin, dirs = pixel_rays(cam, width, height)
    depth = np.full(len(dirs), np.inf)
    sem = np.zeros(len(dirs), dtype=np.uint8)
    inst = np.zeros(len(dirs), dtype=np.uint32)
    for prim in primitives:
        t = intersect(prim, origin, dirs)
        closer = t < depth
        depth[closer] = t[closer]
        sem[closer] = int(prim.semantic_label)
        inst[closer] = prim.instance_id or 0
    shape = (height, width)
    return depth.reshape(shape), sem.reshape(shape), inst.reshape(shape)


# ---------------------------------------------------------------- voxelisation

def contains(primitive: ScenePrimitive, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    s = primitive.shape
    if isinstance(s, Box):
        return np.all((pts >= np.asarray(s.lo)) & (pts <= np.asarray(s.hi)), axis=1)
    za, zb = s.segment
    dz = np.clip(pts[:, 2], za, zb) - pts[:, 2]
    return (pts[:, 0] - s.x) ** 2 + (pts[:, 1] - s.y) ** 2 + dz ** 2 <= s.radius ** 2


def surface_distance(primitive: ScenePrimitive, pts) -> np.ndarray:
    """Unsigned distance from points to the primitive's surface."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    s = primitive.shape
    if isinstance(s, Box):
        lo, hi = np.asarray(s.lo), np.asarray(s.hi)
        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        out_d = np.linalg.norm(outside, axis=1)
        in_d = np.min(np.minimum(pts - lo, hi - pts), axis=1)
        return np.where(out_d > 0, out_d, np.abs(in_d))
    za, zb = s.segment
    dz = np.clip(pts[:, 2], za, zb) - pts[:, 2]
    return np.abs(np.sqrt((pts[:, 0] - s.x) ** 2 + (pts[:, 1] - s.y) ** 2 + dz ** 2) - s.radius)


def _index_range(lo, hi, spec: VoxelGridSpec):
    o = np.asarray(spec.origin)
    i0 = np.maximum(np.floor((np.asarray(lo) - o) / spec.voxel_size).astype(int) - 1, 0)
    i1 = np.minimum(np.floor((np.asarray(hi) - o) / spec.voxel_size).astype(int) + 2,
                    np.asarray(spec.dims))
    return i0, i1


def _bounds(shape):
    if isinstance(shape, Box):
        return shape.lo, shape.hi
    return ((shape.x - shape.radius, shape.y - shape.radius, shape.z0),
            (shape.x + shape.radius, shape.y + shape.radius, shape.z0 + shape.height))


def _overlaps(shape, lo, hi) -> np.ndarray:
    """Whether voxel boxes ``[lo, hi)`` touch the solid (conservative voxelisation)."""
    if isinstance(shape, Box):
        return np.all((lo <= np.asarray(shape.hi)) & (hi > np.asarray(shape.lo)), axis=-1)
    za, zb = shape.segment
    dx = np.maximum(np.maximum(lo[..., 0] - shape.x, shape.x - hi[..., 0]), 0.0)
    dy = np.maximum(np.maximum(lo[..., 1] - shape.y, shape.y - hi[..., 1]), 0.0)
    dz = np.maximum(np.maximum(lo[..., 2] - zb, za - hi[..., 2]), 0.0)
    return dx * dx + dy * dy + dz * dz < shape.radius ** 2


def voxelize_analytic(primitives: Sequence[ScenePrimitive], spec: VoxelGridSpec,
                      mode: str = "center") -> LabelVolume:
    """Label volume straight from the primitives.

    ``mode="center"`` labels a voxel when its centre lies in a primitive.
    ``mode="overlap"`` labels it when any part of the voxel touches one; this
    is the reference for surface-sampled labels such as fused depth maps.
    Overlaps resolve by label priority, pedestrians first.
    """
    if mode not in ("center", "overlap"):
        raise ValueError(f"unknown mode {mode!r}")
    labels = np.zeros(spec.dims, dtype=np.uint8)
    inst = np.zeros(spec.dims, dtype=np.uint32)
    prio = priority_array()
    centers = spec.centers()
    vs = spec.voxel_size
    for prim in primitives:
        i0, i1 = _index_range(*_bounds(prim.shape), spec)
        if np.any(i1 <= i0):
            continue
        sl = tuple(slice(a, b) for a, b in zip(i0, i1))
        c = centers[sl]
        if mode == "center":
            hit = contains(prim, c.reshape(-1, 3)).reshape(c.shape[:3])
        else:
            hit = _overlaps(prim.shape, c - vs / 2, c + vs / 2)
        lab = int(prim.semantic_label)
        sub = labels[sl]
        win = hit & (prio[sub] < prio[lab])
        sub[win] = lab
        inst[sl][win] = prim.instance_id or 0
    return LabelVolume(spec, labels, inst)


def gt_locations(primitives: Sequence[ScenePrimitive]) -> list:
    locs = [(p.shape.x, p.shape.y, p.instance_id) for p in primitives
            if p.semantic_label == SemanticClass.PEDESTRIAN]
    return sorted(locs, key=lambda t: t[2])
