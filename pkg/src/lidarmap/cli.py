"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error. Every option may also
be given in a ``key = value`` file passed with ``--config``; flags on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import Sequence

from lidarmap import geometry
from lidarmap.errors import LidarMapError
from lidarmap.metrics import format_report, full_report, table_header, table_row
from lidarmap.octree import BoundingBox, OccupancyOctree, from_pointcloud
from lidarmap.pointcloud import (
    FilterPipeline,
    PointCloud,
    parse_stage,
    preset_pipeline,
    read_pointcloud,
    write_pointcloud,
)
from lidarmap.reconstruct import BuildSummary, moving_cloud, static_cloud
from lidarmap.simulator import (
    SESSION_FILE,
    SessionConfig,
    ground_truth_octree,
    read_kv,
    read_scene,
    run_session,
    station_log_name,
)
from lidarmap.sweep import SweepRow, resolution_sweep

log = logging.getLogger("lidarmap")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} numbers, got {text!r}")
    return vals


def _point(text: str) -> tuple[float, ...]:
    return _floats(text, 3)


def _box(text: str) -> BoundingBox:
    try:
        return BoundingBox.parse(text)
    except LidarMapError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value file with option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--resolution", type=float, default=0.2, help="voxel side in meters")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="lidarmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate a capture session")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("-o", "--out", type=Path, required=True, help="output directory")
    p.add_argument("--mode", choices=("static", "trolley"), default="static")
    p.add_argument("--sensor", choices=("sweep_like", "rplidar_like"), default="sweep_like")
    p.add_argument("--rev-frequency", type=float, default=2.0)
    p.add_argument("--relative-sigma", type=float, default=0.02)
    p.add_argument("--absolute-sigma", type=float, default=0.03)
    p.add_argument("--stations", default="0 0", help="'x y [yaw]; x y [yaw]; ...'")
    p.add_argument("--height", type=float, default=1.0)
    p.add_argument("--motor-step-deg", type=float, default=5.0)
    p.add_argument("--revolutions", type=int, default=0, help="0 = one full motor turn")
    p.add_argument("--waypoints", default="", help="'x y yaw t; ...' (trolley mode)")
    p.add_argument("--yaw-a-sigma", type=float, default=0.03)
    p.add_argument("--yaw-b-sigma", type=float, default=0.04)
    p.add_argument("--gyro-drift-rate", type=float, default=0.005)
    p.add_argument("--gyro-noise", type=float, default=0.002)
    p.add_argument("--position-sigma", type=float, default=0.02)
    p.add_argument("--stream-rate", type=float, default=50.0)
    p.add_argument("--ground-truth", action="store_true", help="also write ground_truth.oct")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build", parents=[common], help="scan logs to point cloud")
    p.add_argument("session", type=Path, help="directory written by 'simulate'")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--max-skew", type=float, default=0.05)
    p.add_argument(
        "--yaw-source",
        choices=("fused", "a", "b", "drift"),
        default="fused",
        help="yaw used in trolley mode",
    )
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("filter", parents=[common], help="post-process a point cloud")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--preset", default="none", help="none, map1, map2, map3 or ref")
    p.add_argument("--stage", action="append", default=[], help="explicit stage, repeatable")
    p.add_argument("--leaf", type=float, default=0.05)
    p.add_argument("--pass-axis", default="z")
    p.add_argument("--pass-min", type=float, default=-0.5)
    p.add_argument("--pass-max", type=float, default=2.5)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--radius", type=float, default=0.05)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("to-octree", parents=[common], help="point cloud to octree")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--origin", type=_point, help="sensor origin for clouds without one")
    p.add_argument("--dump", type=Path, help="also write an ASCII leaf dump")
    p.set_defaults(func=cmd_to_octree)

    p = sub.add_parser("compare", parents=[common], help="compare two octrees")
    p.add_argument("ref", type=Path)
    p.add_argument("tar", type=Path)
    p.add_argument("-o", "--out", type=Path)
    p.add_argument("--box", type=_box, help="'xmin ymin zmin xmax ymax zmax'")
    p.add_argument("--literal-iou", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--ratio-mode", choices=("full_box", "known_only"), default="full_box")
    p.add_argument("--table", type=_bool, nargs="?", const=True, default=False,
                   help="print a CSV header and row instead of key: value lines")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="resolution sweep over one cloud")
    p.add_argument("cloud", type=Path)
    p.add_argument("--resolutions", type=_floats, default=(0.4, 0.2, 0.1))
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--origin", type=_point)
    p.add_argument("-o", "--out", type=Path)
    p.set_defaults(func=cmd_sweep)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv`` with defaults taken from the ``--config`` file, if any.

    Options set in the file no longer count as required, so the file may
    carry them on its own; flags on the command line still win.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices  # type: ignore[union-attr]
    if known.config is None or known.command not in subs:
        return parser.parse_args(argv)
    try:
        kv = read_kv(known.config)
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from None
    sub = subs[known.command]
    dests = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in kv.items():
        action = dests.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for '{known.command}'")
        if isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in value.split("|") if v.strip()]
        else:
            defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"lidarmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"lidarmap: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.resolution is not None and not args.resolution > 0:
        print("lidarmap: error: resolution must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lidarmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LidarMapError, OSError) as exc:
        print(f"lidarmap: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _distinct(inp: Path, out: Path) -> None:
    if inp.resolve() == out.resolve():
        raise UsageError("input and output paths must differ")


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    if not args.scene.is_file():
        raise DataError(f"scene file not found: {args.scene}")
    scene = read_scene(args.scene)
    try:
        cfg = SessionConfig.from_mapping(
            {
                "mode": args.mode,
                "sensor": args.sensor,
                "rev_frequency": str(args.rev_frequency),
                "relative_sigma": str(args.relative_sigma),
                "absolute_sigma": str(args.absolute_sigma),
                "seed": str(args.seed),
                "stations": args.stations,
                "height": str(args.height),
                "motor_step": repr(math.radians(args.motor_step_deg)),
                "revolutions": str(args.revolutions),
                "waypoints": args.waypoints,
                "yaw_a_sigma": str(args.yaw_a_sigma),
                "yaw_b_sigma": str(args.yaw_b_sigma),
                "gyro_drift_rate": str(args.gyro_drift_rate),
                "gyro_noise": str(args.gyro_noise),
                "position_sigma": str(args.position_sigma),
                "stream_rate": str(args.stream_rate),
            }
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    written = run_session(scene, cfg, args.out)
    if args.ground_truth:
        gt = ground_truth_octree(scene, args.resolution)
        gt.save(args.out / "ground_truth.oct")
        written.append(args.out / "ground_truth.oct")
    for p in written:
        print(p)
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    session = args.session
    cfg_path = session / SESSION_FILE
    if not cfg_path.is_file():
        raise DataError(f"no {SESSION_FILE} in {session}")
    cfg = SessionConfig.from_mapping(read_kv(cfg_path))
    summary = BuildSummary()
    if cfg.mode == "static":
        clouds = []
        for i, st in enumerate(cfg.stations):
            samples = geometry.read_scan_log(session / station_log_name(i))
            clouds.append(static_cloud(samples, st[0], st[1], cfg.height, summary))
        cloud = PointCloud.concatenate(clouds)
    else:
        samples = geometry.read_scan_log(session / "scan.log")
        streams = {
            name: geometry.read_estimate_stream(session / f"yaw_{name}.txt")
            for name in ("a", "b", "drift")
        }
        position = geometry.read_position_stream(session / "position.txt")
        if args.yaw_source == "fused":
            primary, secondary = streams["a"], streams["b"]
        else:
            primary = secondary = streams[args.yaw_source]
        cloud = moving_cloud(samples, primary, secondary, position, cfg.height, args.max_skew, summary)
    print(
        f"samples: {summary.samples}  dropouts: {summary.dropouts}  "
        f"gaps: {summary.gaps}  points: {summary.points}"
    )
    if len(cloud) == 0:
        raise DataError("empty cloud")
    write_pointcloud(args.out, cloud)
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    _distinct(args.input, args.out)
    try:
        if args.stage:
            pipeline = FilterPipeline(tuple(parse_stage(s) for s in args.stage))
        else:
            pipeline = preset_pipeline(
                args.preset,
                leaf=args.leaf,
                axis=args.pass_axis,
                lo=args.pass_min,
                hi=args.pass_max,
                sigma=args.sigma,
                radius=args.radius,
            )
    except LidarMapError as exc:
        raise UsageError(str(exc)) from None
    cloud = read_pointcloud(args.input)
    out = pipeline(cloud)
    stages = " -> ".join(type(s).__name__ for s in pipeline.stages) or "identity"
    print(f"pipeline: {stages}")
    print(f"points: {len(cloud)} -> {len(out)}")
    write_pointcloud(args.out, out)
    return EXIT_OK


def cmd_to_octree(args: argparse.Namespace) -> int:
    _distinct(args.input, args.out)
    cloud = read_pointcloud(args.input)
    t0 = time.perf_counter()
    tree = from_pointcloud(cloud, args.resolution, origin=args.origin)
    elapsed = (time.perf_counter() - t0) * 1e3
    tree.save(args.out)
    if args.dump:
        with open(args.dump, "w") as fh:
            tree.dump_ascii(fh)
    print(f"resolution: {args.resolution:.9g}")
    print(f"leaf_count: {len(tree)}")
    print(f"build_time_ms: {elapsed:.9g}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    ref = OccupancyOctree.load(args.ref)
    tar = OccupancyOctree.load(args.tar)
    report = full_report(
        ref, tar, args.box, literal_iou=args.literal_iou, ratio_mode=args.ratio_mode
    )
    text = f"{table_header()}\n{table_row(report)}\n" if args.table else format_report(report)
    sys.stdout.write(text)
    if args.out:
        args.out.write_text(text)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if not args.resolutions or any(r <= 0 for r in args.resolutions):
        raise UsageError("resolutions must be positive")
    cloud = read_pointcloud(args.cloud)
    rows = resolution_sweep(cloud, args.resolutions, args.trials, origin=args.origin)
    lines = [",".join(SweepRow.HEADER)] + [",".join(r.cells()) for r in rows]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        args.out.write_text(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
