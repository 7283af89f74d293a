"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 success, 2 usage error, 3 missing input, 4 invalid parameter
or precondition, 5 malformed input file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as C
from . import io
from .bev import BevMap, extract_locations, splat_gaussian
from .fusion import depth_to_points, fuse_and_voxelize
from .geometry import VoxelGridSpec
from .grouping import group_instances, merge_panoptic
from .metrics import detection_scores, match_detections, view_level_report, volume_report
from .raymarch import RayMarchParams, render_view
from .scenegen import SceneConfig, SceneError, gt_locations, make_rig, render_sensors, sample_scene
from .view_transform import lift_features
from .volumes import InstanceVolume, LabelVolume, PanopticVolume, compose_panoptic

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_PRECONDITION, EXIT_FORMAT = 0, 2, 3, 4, 5


class CliError(Exception):
    code = EXIT_PRECONDITION
    kind = "precondition"


class MissingInput(CliError):
    code = EXIT_MISSING
    kind = "missing-input"


@dataclass
class RunConfig:
    subcommand: str
    seed: int = 0
    tau: float = C.DETECTION_THRESHOLD
    r: float = C.GROUPING_RADIUS
    t: float = C.MATCH_DISTANCE
    sigma: float = C.GAUSSIAN_SIGMA
    nms_radius: float = C.NMS_RADIUS
    max_steps: Optional[int] = None
    min_hit: float = C.MIN_HIT_DISTANCE
    max_trace: float = C.MAX_TRACE_DISTANCE
    thresholds: list = field(default_factory=lambda: list(C.AP_THRESHOLDS))
    view_thresholds: list = field(default_factory=lambda: list(C.VIEW_AP_THRESHOLDS))
    strict_eq1: bool = False
    threads: Optional[int] = None

    def validate(self):
        if not 0 < self.tau < 1:
            raise CliError(f"--tau must be in (0, 1), got {self.tau}")
        for name in ("r", "t", "sigma", "nms_radius", "min_hit", "max_trace"):
            if not getattr(self, name) > 0:
                raise CliError(f"--{name.replace('_', '-')} must be positive")
        if self.min_hit >= self.max_trace:
            raise CliError("--min-hit must be below --max-trace")
        if self.max_steps is not None and self.max_steps < 1:
            raise CliError("--max-steps must be positive")
        for ts in (self.thresholds, self.view_thresholds):
            if not ts or any(not 0 < x <= 1 for x in ts):
                raise CliError("IoU thresholds must be a non-empty list in (0, 1]")
        if self.threads is not None and self.threads < 1:
            raise CliError("--threads must be at least 1")

    def raymarch(self) -> RayMarchParams:
        return RayMarchParams(self.max_steps, self.min_hit, self.max_trace)


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{p} does not exist")
    return p


def _write_json(obj, out: Optional[str]):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _scene(root) -> tuple:
    root = _need(root)
    meta = json.loads(_need(root / "scene.json").read_text())
    cfg = SceneConfig.from_dict(meta["config"])
    cams = io.load_calibration(_need(root / "calibration.json"))
    return cfg, cams, meta


def _frames(meta, frame: Optional[int]) -> list:
    return list(range(meta["frames"])) if frame is None else [frame]


# ----------------------------------------------------------------- stages

def cmd_gen(args, rc: RunConfig):
    if args.preset:
        cfg = SceneConfig.preset(args.preset, seed=rc.seed)
    else:
        cfg = SceneConfig(extent=tuple(args.extent), height=args.height, num_cameras=args.cameras,
                          seed=rc.seed)
    if args.peds is not None:
        cfg.num_pedestrians = args.peds
    if args.others is not None:
        cfg.num_others = args.others
    cfg.image_size = (args.width, args.height_px)
    if args.frames < 1:
        raise CliError("--frames must be at least 1")
    out = Path(args.out)
    cams = make_rig(cfg)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    io.save_calibration(cams, out / "calibration.json")
    spec = cfg.grid_spec()
    meta = {"config": cfg.to_dict(), "frames": args.frames,
            "grid": {"origin": list(spec.origin), "dims": list(spec.dims),
                     "voxel_size": spec.voxel_size}}
    (out / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    rows = []
    for f in range(args.frames):
        try:
            prims = sample_scene(cfg, frame=f)
        except SceneError as exc:
            raise CliError(str(exc)) from exc
        io.frame_dir(out, f).mkdir(parents=True, exist_ok=True)
        for i, cam in enumerate(cams):
            depth, sem, inst = render_sensors(cam, prims)
            paths = io.sensor_paths(out, f, i)
            io.write_pfm(paths["depth"], depth)
            io.write_pgm(paths["sem"], sem)
            io.write_pgm(paths["inst"], inst)
        locs = gt_locations(prims)
        io.write_detections(io.gt_paths(out, f)["locations"], [(f, x, y, 1.0) for x, y, _ in locs])
        rows.append(len(locs))
    print(f"wrote {args.frames} frame(s), {len(cams)} cameras, {sum(rows)} pedestrians to {out}")


def cmd_fuse(args, rc: RunConfig):
    cfg, cams, meta = _scene(args.scene)
    spec = cfg.grid_spec()
    for f in _frames(meta, args.frame):
        clouds = []
        for i, cam in enumerate(cams):
            paths = io.sensor_paths(args.scene, f, i)
            depth = io.read_pfm(_need(paths["depth"]))
            sem = io.read_pgm(_need(paths["sem"]))
            inst = io.read_pgm(_need(paths["inst"]))
            clouds.append(depth_to_points(cam, depth, sem, inst))
        vol = fuse_and_voxelize(clouds, spec, aoi=(spec.lower, spec.upper))
        gt = io.gt_paths(args.out or args.scene, f)
        gt["sem"].parent.mkdir(parents=True, exist_ok=True)
        io.save_grid(vol, gt["sem"])
        io.save_grid(InstanceVolume(spec, vol.instances), gt["inst"])
        print(f"frame {f}: {int(np.count_nonzero(vol.labels))} occupied voxels -> {gt['sem']}")


def cmd_lift(args, rc: RunConfig):
    cfg, cams, _ = _scene(args.scene)
    feats = Path(_need(args.features))
    maps = [io.load_array(_need(feats / f"cam{i:02d}.f32"))[0] for i in range(len(cams))]
    vol = lift_features(cams, maps, cfg.grid_spec(), scale=args.scale, strict_eq1=rc.strict_eq1)
    spec = cfg.grid_spec()
    io.save_array(args.out, vol.values, origin=list(spec.origin), voxel_size=spec.voxel_size)
    io.save_array(str(args.out) + ".count", vol.valid_count)
    print(f"lifted {len(cams)} views into {vol.values.shape}")


def _bev_from_file(path) -> BevMap:
    arr, meta = io.load_array(_need(path))
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise CliError(f"BEV map must be (X, Y) or (1, X, Y), got {arr.shape}")
    return BevMap(arr.astype(np.float64), tuple(meta.get("origin", (0.0, 0.0)))[:2],
                  float(meta.get("cell_size", C.VOXEL_SIZE)))


def cmd_detect(args, rc: RunConfig):
    if args.splat:
        if not args.scene:
            raise CliError("--splat needs --scene for the grid geometry")
        cfg, _, _ = _scene(args.scene)
        locs = io.read_detections(_need(args.splat)).get(args.frame, [])
        bev = splat_gaussian([(x, y) for x, y, _ in locs], cfg.grid_spec(), rc.sigma)
    elif args.bev:
        bev = _bev_from_file(args.bev)
    else:
        raise CliError("detect needs --bev or --splat")
    dets = extract_locations(bev, rc.tau, rc.nms_radius)
    io.write_detections(args.out, [(args.frame, d.x, d.y, d.score) for d in dets])
    print(f"{len(dets)} detections -> {args.out}")


def cmd_group(args, rc: RunConfig):
    sem = io.load_grid(_need(args.sem))
    if not isinstance(sem, LabelVolume):
        raise CliError(f"{args.sem} is not a semantic grid")
    dets = io.read_detections(_need(args.detections)).get(args.frame, [])
    inst = group_instances(sem, [(x, y) for x, y, _ in dets], rc.r)
    pan = merge_panoptic(sem, inst)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    io.save_grid(pan, args.out)
    if args.inst_out:
        io.save_grid(inst, args.inst_out)
    print(f"{inst.num_instances} instances -> {args.out}")


def _panoptic_grid(path) -> PanopticVolume:
    vol = io.load_grid(_need(path))
    if not isinstance(vol, PanopticVolume):
        raise CliError(f"{path} is not a panoptic grid")
    return vol


def cmd_render(args, rc: RunConfig):
    _, cams, _ = _scene(args.scene)
    vol = io.load_grid(_need(args.grid))
    if isinstance(vol, InstanceVolume):
        raise CliError(f"{args.grid} holds bare instance ids; render a semantic or panoptic grid")
    if args.inst:
        if not isinstance(vol, LabelVolume):
            raise CliError(f"--inst combines with a semantic --grid, {args.grid} is panoptic")
        inst = io.load_grid(_need(args.inst))
        if not isinstance(inst, InstanceVolume) or inst.spec != vol.spec:
            raise CliError(f"{args.inst} is not an instance grid matching {args.grid}")
        vol = PanopticVolume(vol.spec, compose_panoptic(vol.labels, inst.ids))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = rc.raymarch()
    for i, cam in enumerate(cams):
        img = render_view(cam, vol, params, args.width, args.height)
        io.write_pgm(out / f"cam{i:02d}.pgm", img)
        if args.color:
            io.write_ppm(out / f"cam{i:02d}.ppm", io.colorize(img))
    print(f"rendered {len(cams)} views -> {out}")


def cmd_eval2d(args, rc: RunConfig):
    preds = io.read_detections(_need(args.pred))
    gts = io.read_detections(_need(args.gt))
    reports = [match_detections([p[:2] for p in preds.get(f, [])], [g[:2] for g in gts.get(f, [])], rc.t)
               for f in sorted(set(preds) | set(gts))]
    scores = detection_scores(reports)
    _write_json({k: scores[k] for k in ("moda", "modp", "precision", "recall", "f1")}, args.out)


def cmd_eval3d(args, rc: RunConfig):
    pred_sem = io.load_grid(_need(args.pred_sem))
    gt_sem = io.load_grid(_need(args.gt_sem))
    pred_pan = _panoptic_grid(args.pred_pan) if args.pred_pan else None
    gt_pan = _panoptic_grid(args.gt_pan) if args.gt_pan else None
    report = volume_report(pred_sem, gt_sem, pred_pan, gt_pan, rc.thresholds)
    _write_json(report.to_dict(), args.out)


def cmd_evalview(args, rc: RunConfig):
    pred_dir, gt_dir = _need(args.pred), _need(args.gt)
    names = sorted(p.name for p in gt_dir.glob("cam*.pgm"))
    if not names:
        raise MissingInput(f"no cam*.pgm masks in {gt_dir}")
    preds = [io.read_pgm(_need(pred_dir / n)) for n in names]
    gts = [io.read_pgm(gt_dir / n) for n in names]
    report = view_level_report(preds, gts, thresholds=rc.view_thresholds)
    _write_json(report.to_dict(), args.out)


def cmd_report(args, rc: RunConfig):
    """Each input goes under its file stem; ``summary`` lists every scalar metric as ``stem.key``."""
    merged: dict = {"summary": {}}
    for path in args.inputs:
        p = _need(path)
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise io.FormatError(f"{p}: not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise io.FormatError(f"{p}: expected a JSON object")
        stem = p.name.split(".")[0]
        if stem in merged:
            raise CliError(f"two inputs share the name {stem!r}")
        merged[stem] = data
        for k, v in data.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                merged["summary"][f"{stem}.{k}"] = v
    _write_json(merged, args.out)


def cmd_config(args, rc: RunConfig):
    _write_json(C.snapshot(), args.out)


# ----------------------------------------------------------------- parser

def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (falls back to $OCCUKIT_SEED, then 0)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    common.add_argument("--tau", type=float, default=C.DETECTION_THRESHOLD)
    common.add_argument("--r", type=float, default=C.GROUPING_RADIUS, help="grouping radius (m)")
    common.add_argument("--t", type=float, default=C.MATCH_DISTANCE, help="match distance (m)")
    common.add_argument("--sigma", type=float, default=C.GAUSSIAN_SIGMA)
    common.add_argument("--nms-radius", type=float, default=C.NMS_RADIUS)
    common.add_argument("--max-steps", type=int, default=None)
    common.add_argument("--min-hit", type=float, default=C.MIN_HIT_DISTANCE)
    common.add_argument("--max-trace", type=float, default=C.MAX_TRACE_DISTANCE)
    common.add_argument("--thresholds", type=_floats, default=list(C.AP_THRESHOLDS))
    common.add_argument("--view-thresholds", type=_floats, default=list(C.VIEW_AP_THRESHOLDS))
    common.add_argument("--strict-eq1", action="store_true",
                        help="divide lifted features by the number of views, not valid views")

    parser = argparse.ArgumentParser(prog="occukit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(__import__("occukit.scenegen").scenegen.SCENE_PRESETS))
    p.add_argument("--extent", type=float, nargs=2, default=(20.0, 20.0), metavar=("X", "Y"))
    p.add_argument("--height", type=float, default=3.0, help="grid height (m)")
    p.add_argument("--cameras", type=int, default=5)
    p.add_argument("--peds", type=int, default=None)
    p.add_argument("--others", type=int, default=None)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height-px", type=int, default=360)
    p.add_argument("--frames", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fuse", parents=[common], help="fuse sensor frames into label grids")
    p.add_argument("--scene", required=True)
    p.add_argument("--frame", type=int, default=None)
    p.add_argument("--out", default=None, help="dataset root for gt/ (default: --scene)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("lift", parents=[common], help="lift per-view feature maps to a volume")
    p.add_argument("--scene", required=True)
    p.add_argument("--features", required=True, help="directory of camNN.f32 maps")
    p.add_argument("--scale", type=float, default=C.FEATURE_SCALE)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("detect", parents=[common], help="extract pedestrian locations from a BEV map")
    p.add_argument("--bev")
    p.add_argument("--splat", help="locations CSV to splat into a target map instead of --bev")
    p.add_argument("--scene")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("group", parents=[common], help="group pedestrian voxels into instances")
    p.add_argument("--sem", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--inst-out")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("render", parents=[common], help="ray-march label images from a grid")
    p.add_argument("--scene", required=True)
    p.add_argument("--grid", required=True, help="semantic or panoptic grid")
    p.add_argument("--inst", help="instance grid combined with a semantic --grid")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--color", action="store_true")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval2d", parents=[common], help="MODA / MODP / precision / recall / F1")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval2d)

    p = sub.add_parser("eval3d", parents=[common], help="voxel IoU / AP / PQ")
    p.add_argument("--pred-sem", required=True)
    p.add_argument("--gt-sem", required=True)
    p.add_argument("--pred-pan")
    p.add_argument("--gt-pan")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval3d)

    p = sub.add_parser("evalview", parents=[common], help="view-level metrics on rendered masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evalview)

    p = sub.add_parser("report", parents=[common], help="merge metric JSON files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("config", parents=[common], help="print the pinned defaults")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)
    return parser


def _run_config(args) -> RunConfig:
    seed = args.seed
    if seed is None:
        env = os.environ.get("OCCUKIT_SEED")
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise CliError(f"OCCUKIT_SEED must be an integer, got {env!r}")
    return RunConfig(
        args.subcommand, seed, args.tau, args.r, args.t, args.sigma, args.nms_radius,
        args.max_steps, args.min_hit, args.max_trace, args.thresholds, args.view_thresholds,
        args.strict_eq1, args.threads,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        rc = _run_config(args)
        rc.validate()
        if rc.threads:
            import numba
            numba.set_num_threads(min(rc.threads, numba.config.NUMBA_NUM_THREADS))
        args.func(args, rc)
    except CliError as exc:
        print(f"occukit: error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"occukit: error[missing-input]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except io.FormatError as exc:
        print(f"occukit: error[format/{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as exc:
        print(f"occukit: error[precondition]: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
