"""File formats and dataset layout.

Grid files (``.mvpo``), little-endian, 44-byte header::

    0   4s   magic "MVPO"
    4   u32  version (1)
    8   u8   payload kind: 1 semantic u8, 2 instance u32, 3 panoptic u32
    9   3x   reserved, zero
    12  3u32 dims X, Y, Z
    24  f32  voxel size (m)
    28  3f32 origin (m)
    40  u32  CRC-32 of the payload

The payload follows in C order, i.e. ``idx = (ix * Y + iy) * Z + iz``.

Header floats are stored as f32; on load they are mapped back to the
shortest decimal that round-trips, so specs built from values such as
``0.1`` come back bit-identical.

Depth maps are little-endian greyscale PFM, label masks 16-bit PGM, and
voxel visualisations ASCII PLY.
"""

from __future__ import annotations

import csv
import json
import struct
import zlib
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .config import DEFAULT_PALETTE, PANOPTIC_THING_OFFSET
from .geometry import CameraIntrinsics, CameraModel, CameraPose, VoxelGridSpec
from .volumes import InstanceVolume, LabelVolume, PanopticVolume

MAGIC = b"MVPO"
VERSION = 1
HEADER = struct.Struct("<4sIB3x3If3fI")
assert HEADER.size == 44
KIND_SEMANTIC, KIND_INSTANCE, KIND_PANOPTIC = 1, 2, 3
_KIND_DTYPE = {KIND_SEMANTIC: np.dtype("<u1"), KIND_INSTANCE: np.dtype("<u4"),
               KIND_PANOPTIC: np.dtype("<u4")}
MAX_GRID_BYTES = 1 << 34


class FormatError(ValueError):
    """Base class for malformed-file diagnostics."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


class BadPayloadKindError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class HeaderValueError(FormatError):
    pass


class CalibrationError(FormatError):
    pass


class PaletteError(ValueError):
    pass


Grid = Union[LabelVolume, InstanceVolume, PanopticVolume]


def _f32_roundtrip(x: float) -> float:
    return float(str(np.float32(x)))


# ----------------------------------------------------------------- grids

def encode_grid(vol: Grid) -> bytes:
    if isinstance(vol, LabelVolume):
        kind, data = KIND_SEMANTIC, vol.labels
    elif isinstance(vol, InstanceVolume):
        kind, data = KIND_INSTANCE, vol.ids
    elif isinstance(vol, PanopticVolume):
        kind, data = KIND_PANOPTIC, vol.labels
    else:
        raise TypeError(f"cannot serialise {type(vol).__name__}")
    spec = vol.spec
    payload = np.ascontiguousarray(data, dtype=_KIND_DTYPE[kind]).tobytes()
    header = HEADER.pack(MAGIC, VERSION, kind, *spec.dims, spec.voxel_size, *spec.origin,
                         zlib.crc32(payload))
    return header + payload


def decode_grid(buf: bytes) -> Grid:
    if len(buf) < HEADER.size:
        raise TruncatedFileError(f"file is {len(buf)} bytes, header needs {HEADER.size}")
    magic, version, kind, nx, ny, nz, vs, ox, oy, oz, crc = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported grid version {version}")
    if kind not in _KIND_DTYPE:
        raise BadPayloadKindError(f"unknown payload kind {kind}")
    if min(nx, ny, nz) < 1:
        raise DimensionOverflowError(f"grid dims must be positive, got {(nx, ny, nz)}")
    dtype = _KIND_DTYPE[kind]
    n_bytes = nx * ny * nz * dtype.itemsize
    if n_bytes > MAX_GRID_BYTES:
        raise DimensionOverflowError(f"dims {(nx, ny, nz)} need {n_bytes} bytes")
    payload = buf[HEADER.size:]
    if len(payload) < n_bytes:
        raise TruncatedFileError(f"payload has {len(payload)} bytes, dims need {n_bytes}")
    if len(payload) > n_bytes:
        raise FormatError(f"{len(payload) - n_bytes} trailing bytes after payload")
    if zlib.crc32(payload) != crc:
        raise ChecksumError("payload checksum mismatch")
    try:
        spec = VoxelGridSpec(tuple(_f32_roundtrip(v) for v in (ox, oy, oz)), (nx, ny, nz),
                             _f32_roundtrip(vs))
    except ValueError as exc:
        raise HeaderValueError(str(exc)) from exc
    data = np.frombuffer(payload, dtype=dtype).reshape(nx, ny, nz)
    try:
        if kind == KIND_SEMANTIC:
            return LabelVolume(spec, data.astype(np.uint8))
        if kind == KIND_INSTANCE:
            return InstanceVolume(spec, data.astype(np.uint32))
        return PanopticVolume(spec, data.astype(np.uint32))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def save_grid(vol: Grid, path) -> None:
    """Write a grid file. A LabelVolume stores its semantic labels only."""
    Path(path).write_bytes(encode_grid(vol))


def load_grid(path) -> Grid:
    return decode_grid(Path(path).read_bytes())


# ----------------------------------------------------------------- images

def write_pfm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype="<f4")
    if img.ndim != 2:
        raise ValueError("PFM writer handles single-channel images only")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(img[::-1]).tobytes())


def _read_tokens(buf: bytes, count: int):
    """Whitespace-separated header tokens and the offset just past the last one."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFileError("header ended early")
        tokens.append(buf[start:pos].decode("ascii", errors="replace"))
    return tokens, pos + 1


def read_pfm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, pos = _read_tokens(buf, 4)
    if tokens[0] != "Pf":
        raise BadMagicError(f"not a greyscale PFM (magic {tokens[0]!r})")
    try:
        w, h, scale = int(tokens[1]), int(tokens[2]), float(tokens[3])
    except ValueError as exc:
        raise HeaderValueError(f"bad PFM header: {exc}") from exc
    if w < 1 or h < 1:
        raise DimensionOverflowError(f"bad PFM size {w}x{h}")
    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * 4
    if len(buf) - pos < need:
        raise TruncatedFileError(f"PFM payload has {len(buf) - pos} bytes, needs {need}")
    img = np.frombuffer(buf[pos:pos + need], dtype=dtype).reshape(h, w)[::-1]
    return img.astype(np.float32)


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM writer handles single-channel images only")
    if img.size and (img.min() < 0 or img.max() > 65535):
        raise ValueError("label values must fit in 16 bits")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(img.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, pos = _read_tokens(buf, 4)
    if tokens[0] != "P5":
        raise BadMagicError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise HeaderValueError(f"bad PGM header: {exc}") from exc
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise DimensionOverflowError(f"bad PGM geometry {w}x{h} maxval {maxval}")
    width = 1 if maxval < 256 else 2
    need = w * h * width
    if len(buf) - pos < need:
        raise TruncatedFileError(f"PGM payload has {len(buf) - pos} bytes, needs {need}")
    dtype = "u1" if width == 1 else ">u2"
    return np.frombuffer(buf[pos:pos + need], dtype=dtype).reshape(h, w).astype(np.uint32)


def colorize(labels: np.ndarray, palette=None) -> np.ndarray:
    palette = DEFAULT_PALETTE if palette is None else palette
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (3,), dtype=np.uint8)
    for value in np.unique(labels):
        out[labels == value] = _palette_color(palette, int(value))
    return out


def _palette_color(palette, value: int):
    if value in palette:
        return palette[value]
    if value >= PANOPTIC_THING_OFFSET:
        # pedestrian instances get a stable hashed colour
        rng = np.random.default_rng(value)
        return tuple(int(c) for c in rng.integers(64, 256, size=3))
    raise PaletteError(f"palette has no colour for label {value}")


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


# ----------------------------------------------------------------- calibration

def camera_to_dict(cam: CameraModel) -> dict:
    k = cam.intrinsics
    return {
        "name": cam.name, "width": k.width, "height": k.height,
        "K": [k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0],
        "R": [float(x) for x in cam.pose.rotation.ravel()],
        "t": [float(x) for x in cam.pose.translation],
    }


def camera_from_dict(d: dict) -> CameraModel:
    try:
        K = np.asarray(d["K"], dtype=np.float64)
        R = np.asarray(d["R"], dtype=np.float64)
        t = np.asarray(d["t"], dtype=np.float64)
        width, height = int(d["width"]), int(d["height"])
        name = str(d.get("name", "cam"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CalibrationError(f"malformed camera entry: {exc!r}") from exc
    if K.size != 9 or R.size != 9 or t.size != 3:
        raise CalibrationError("K and R need 9 values, t needs 3")
    K = K.reshape(3, 3)
    if K[0, 1] != 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
        raise CalibrationError(f"camera {name}: K is not a pinhole matrix without skew")
    try:
        intr = CameraIntrinsics(K[0, 0], K[1, 1], K[0, 2], K[1, 2], width, height)
        pose = CameraPose(R.reshape(3, 3), t)
    except ValueError as exc:
        raise CalibrationError(f"camera {name}: {exc}") from exc
    return CameraModel(intr, pose, name)


def save_calibration(cams: Sequence[CameraModel], path) -> None:
    Path(path).write_text(json.dumps([camera_to_dict(c) for c in cams], indent=2))


def load_calibration(path) -> list:
    try:
        data = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CalibrationError(f"calibration is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise CalibrationError("calibration must be a JSON array of cameras")
    return [camera_from_dict(d) for d in data]


# ----------------------------------------------------------------- ply

def export_ply(vol, path, palette=None) -> int:
    """ASCII PLY with one coloured vertex per non-Free voxel centre. Returns the vertex count."""
    palette = DEFAULT_PALETTE if palette is None else palette
    labels = np.asarray(getattr(vol, "labels", getattr(vol, "ids", None)))
    spec = vol.spec
    idx = np.argwhere(labels != 0)
    values = labels[tuple(idx.T)] if len(idx) else np.empty(0, dtype=labels.dtype)
    # instance ids share the hashed pedestrian colours of panoptic codes
    shift = PANOPTIC_THING_OFFSET if isinstance(vol, InstanceVolume) else 0
    colours = {int(v): _palette_color(palette, int(v) + shift) for v in np.unique(values)}
    pts = np.asarray(spec.origin) + (idx + 0.5) * spec.voxel_size
    lines = [
        "ply", "format ascii 1.0", f"element vertex {len(idx)}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        "property uint label", "end_header",
    ]
    for p, v in zip(pts, values):
        r, g, b = colours[int(v)]
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {r} {g} {b} {int(v)}")
    Path(path).write_text("\n".join(lines) + "\n")
    return len(idx)


# ----------------------------------------------------------------- detections

def write_detections(path, rows) -> None:
    """Rows of ``(frame, x, y, score)``."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "x_m", "y_m", "score"])
        for frame, x, y, score in rows:
            w.writerow([int(frame), f"{x:.6f}", f"{y:.6f}", f"{score:.6f}"])


def read_detections(path) -> dict:
    """``{frame: [(x, y, score), ...]}``."""
    out: dict = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"frame", "x_m", "y_m"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns frame,x_m,y_m,score")
        for row in reader:
            try:
                out.setdefault(int(row["frame"]), []).append(
                    (float(row["x_m"]), float(row["y_m"]), float(row.get("score") or 1.0)))
            except ValueError as exc:
                raise FormatError(f"{path}: bad row {row}: {exc}") from exc
    return out


# ----------------------------------------------------------------- raw arrays

def save_array(path, array: np.ndarray, **meta) -> None:
    """Raw little-endian f32 with a JSON sidecar (``<path>.json``) holding shape and ``meta``."""
    arr = np.asarray(array, dtype="<f4")
    Path(path).write_bytes(arr.tobytes())
    sidecar = {"shape": list(arr.shape), "dtype": "<f4", **meta}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def load_array(path):
    """Returns ``(array, sidecar dict)``."""
    try:
        meta = json.loads(Path(str(path) + ".json").read_text())
        shape = tuple(int(s) for s in meta["shape"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed sidecar: {exc}") from exc
    buf = Path(path).read_bytes()
    need = int(np.prod(shape)) * 4
    if len(buf) != need:
        raise TruncatedFileError(f"{path}: {len(buf)} bytes, sidecar shape needs {need}")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32), meta


# ----------------------------------------------------------------- dataset layout

def frame_dir(root, frame: int) -> Path:
    return Path(root) / "frames" / f"{frame:04d}"


def sensor_paths(root, frame: int, cam_index: int) -> dict:
    d = frame_dir(root, frame)
    stem = f"cam{cam_index:02d}"
    return {"depth": d / f"{stem}.depth.pfm", "sem": d / f"{stem}.sem.pgm",
            "inst": d / f"{stem}.inst.pgm"}


def gt_paths(root, frame: int) -> dict:
    d = Path(root) / "gt"
    return {"sem": d / f"{frame:04d}.sem.mvpo", "inst": d / f"{frame:04d}.inst.mvpo",
            "locations": d / f"{frame:04d}.locations.csv"}
