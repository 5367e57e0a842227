"""Command-line interface.

Subcommands: sim, flow, transform, foe, detect, viz, sync, pipeline.
Exit codes: 0 success, 2 usage/configuration error, 3 input or format
error, 4 numeric or degenerate-geometry failure that aborted the run.
"""
from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

from . import _kernels
from .config import (
    RunConfig,
    parse_kv_file,
    read_scene_file,
    resolve_config,
    scene_from_mapping,
    scene_to_mapping,
    write_scene_file,
)
from .errors import AlignmentError, ConfigError, DegenerateGeometryError, FormatError
from .flow import farneback_flow
from .formats import (
    frame_filename,
    read_flo,
    read_frame_sequence,
    read_imu_csv,
    read_lmap,
    render_viz,
    write_flo,
    write_lmap,
    write_pgm,
    write_ppm,
)
from .looming import detect_moving, estimate_foe, looming_transform
from .pipeline import run_pipeline
from .simulate import default_scene, render_frame, true_flow, true_mask
from .sync import estimate_offset, vertical_motion_series

_FLO_PATTERN = re.compile(r"^flow_(\d{6})\.flo$")


def _add_flow_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("flow parameters")
    g.add_argument("--levels", type=int, default=None, help="pyramid levels (default 3)")
    g.add_argument("--iterations-per-level", dest="iterations_per_level", type=int, default=None,
                   help="refinement passes per level (default 3)")
    g.add_argument("--poly-n", dest="poly_n", type=int, default=None, help="expansion window size, odd (default 7)")
    g.add_argument("--poly-sigma", dest="poly_sigma", type=float, default=None,
                   help="expansion applicability sigma (default 1.5)")
    g.add_argument("--win-size", dest="win_size", type=int, default=None, help="aggregation window, odd (default 15)")
    g.add_argument("--regularization", type=float, default=None,
                   help="trace-relative diagonal loading (default 1e-9)")


def _add_looming_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("looming parameters")
    g.add_argument("--mode", choices=("pixel", "angular"), default=None, help="ratio mode (default pixel)")
    g.add_argument("--eps-den", dest="eps_den", type=float, default=None, help="denominator floor (default 1e-3)")
    g.add_argument("--r-max", dest="r_max", type=float, default=None, help="ratio saturation bound (default 100)")
    g.add_argument("--tau-mag", dest="tau_mag", type=float, default=None,
                   help="minimum flow magnitude in px/frame (default 0.5)")
    g.add_argument("--tau-dir", dest="tau_dir", type=float, default=None,
                   help="direction deviation threshold in radians (default 0.35)")
    g.add_argument("--min-area", dest="min_area", type=int, default=None,
                   help="smallest surviving component in px (default 25)")
    g.add_argument("--flip-ratio", dest="flip_ratio", action=argparse.BooleanOptionalAction, default=None,
                   help="divide vertical by horizontal instead")
    g.add_argument("--fx", type=float, default=None)
    g.add_argument("--fy", type=float, default=None)
    g.add_argument("--cx", type=float, default=None)
    g.add_argument("--cy", type=float, default=None)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key=value configuration file")
    p.add_argument("--threads", type=int, default=None, help="worker threads, 0 = auto (default 0)")


def _resolved(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return resolve_config(flags, config_path=args.config if getattr(args, "config", None) else None,
                          env=os.environ)


def _cmd_sim(args: argparse.Namespace) -> int:
    mapping = parse_kv_file(args.scene) if args.scene else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    scene = scene_from_mapping(mapping)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scene_file(scene, out / "scene.txt")
    for t in range(scene.frames):
        write_pgm(render_frame(scene, t), out / frame_filename(t))
    if args.emit_truth:
        for t in range(scene.frames - 1):
            write_flo(true_flow(scene, t), out / f"true_flow_{t:06d}.flo")
            mask = true_mask(scene, t)
            write_pgm(
                type(render_frame(scene, 0))(mask.moving.astype(float) * 255.0),
                out / f"true_mask_{t:06d}.pgm",
            )
    print(f"sim: wrote {scene.frames} frames to {out}")
    return 0


def _cmd_flow(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    if not cfg.input or not cfg.output:
        raise FormatError("flow requires --input and --out directories")
    frames = read_frame_sequence(cfg.input)
    if len(frames) < 2:
        raise FormatError(f"{cfg.input}: need at least 2 frames")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.flow_params()
    for i in range(len(frames) - 1):
        write_flo(farneback_flow(frames[i], frames[i + 1], params), out / f"flow_{i:06d}.flo")
    print(f"flow: wrote {len(frames) - 1} fields to {out} (backend {_kernels.BACKEND})")
    return 0


def _flo_inputs(path: Path) -> list[tuple[str, Path]]:
    if path.is_dir():
        entries = sorted(
            (m.group(1), p) for p in path.iterdir() if (m := _FLO_PATTERN.match(p.name))
        )
        if not entries:
            raise FormatError(f"{path}: no flow_NNNNNN.flo files found")
        return entries
    return [(path.stem, path)]


def _cmd_transform(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    src = Path(args.flow)
    inputs = _flo_inputs(src)
    out = Path(args.out)
    if src.is_dir():
        out.mkdir(parents=True, exist_ok=True)
    for tag, p in inputs:
        lmap = looming_transform(
            read_flo(p),
            cfg.intrinsics(),
            mode=cfg.mode,
            eps_den=cfg.eps_den,
            r_max=cfg.r_max,
            tau_mag=cfg.tau_mag,
            horizontal_over_vertical=not cfg.flip_ratio,
        )
        write_lmap(lmap, out / f"loom_{tag}.lmap" if src.is_dir() else out)
    print(f"transform: wrote {len(inputs)} map(s)")
    return 0


def _cmd_foe(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    flow = read_flo(Path(args.flow))
    foe = estimate_foe(flow, cfg.tau_mag)
    print(f"{foe.x0!r} {foe.y0!r} {foe.rms_residual!r} {foe.condition!r}")
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    flow = read_flo(Path(args.flow))
    foe = estimate_foe(flow, cfg.tau_mag)
    mask = detect_moving(flow, foe, cfg.detection_params())
    if args.out:
        from .raster import Frame

        write_pgm(Frame(mask.moving.astype(float) * 255.0), args.out)
    print(f"detect: {len(mask.components)} component(s)")
    for comp in mask.components:
        u0, v0, u1, v1 = comp.bbox
        print(f"component bbox={u0},{v0},{u1},{v1} area={comp.area} "
              f"centroid={comp.centroid[0]:.2f},{comp.centroid[1]:.2f}")
    return 0


def _cmd_viz(args: argparse.Namespace) -> int:
    lmap = read_lmap(Path(args.lmap), expected_mode=args.expect_mode)
    write_ppm(render_viz(lmap), args.out)
    print(f"viz: wrote {args.out}")
    return 0


def _cmd_sync(args: argparse.Namespace) -> int:
    imu = read_imu_csv(args.imu)
    flow_dir = Path(args.flow_dir)
    flows = [read_flo(p) for _, p in _flo_inputs(flow_dir)]
    trace = vertical_motion_series(flows, fps=args.fps)
    result = estimate_offset(imu, trace, fps=args.fps, search_window=args.window)
    print(f"offset_s={result.offset_s!r} peak={result.peak!r}")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _resolved(args)
    run_pipeline(cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loomflow",
        description="Detect independently moving objects from a translating camera "
                    "via dense optical flow and per-pixel looming ratios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="render a synthetic scene to a frame directory")
    p.add_argument("--scene", default=None, help="scene key=value file (defaults to the built-in scene)")
    p.add_argument("--set", action="append", default=None, metavar="KEY=VALUE",
                   help="override a scene key (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-truth", action="store_true", help="also write exact flow and masks")
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("flow", help="dense optical flow over a frame directory")
    p.add_argument("--input", default=None, help="frame directory")
    p.add_argument("--out", dest="output", default=None, help="output directory")
    _add_flow_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("transform", help="looming-ratio map from flow fields")
    p.add_argument("--flow", required=True, help=".flo file or directory of flow_NNNNNN.flo")
    p.add_argument("--out", required=True, help="output .lmap file or directory")
    _add_looming_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("foe", help="focus of expansion of one flow field")
    p.add_argument("--flow", required=True, help=".flo file")
    p.add_argument("--tau-mag", dest="tau_mag", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_foe)

    p = sub.add_parser("detect", help="moving-object mask from one flow field")
    p.add_argument("--flow", required=True, help=".flo file")
    p.add_argument("--out", default=None, help="mask PGM path")
    _add_looming_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("viz", help="colormap a looming map to a PPM image")
    p.add_argument("--lmap", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--expect-mode", choices=("pixel", "angular"), default=None,
                   help="fail if the map was not produced in this mode")
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("sync", help="estimate IMU-to-video clock offset")
    p.add_argument("--imu", required=True, help="t,ax,ay,az CSV")
    p.add_argument("--flow-dir", dest="flow_dir", required=True, help="directory of flow_NNNNNN.flo")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--window", type=float, default=3.0, help="search window in seconds")
    p.set_defaults(func=_cmd_sync)

    p = sub.add_parser("pipeline", help="flow + transform + FoE + detection over a sequence")
    p.add_argument("--input", default=None, help="frame directory")
    p.add_argument("--out", dest="output", default=None, help="artifact directory")
    _add_flow_flags(p)
    _add_looming_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DegenerateGeometryError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
