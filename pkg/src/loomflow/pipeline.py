"""End-to-end processing of a frame sequence.

For each consecutive frame pair: dense flow, looming transform, FoE
estimate, moving-object detection, and persisted artifacts. Frame pairs
may be computed concurrently; artifacts and log lines are committed by a
single writer in frame order so reruns are byte-identical for any thread
count (the run log therefore never records execution-only settings such as
the thread count, and throughput goes to stdout instead).
"""
from __future__ import annotations

import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from .config import RunConfig
from .errors import DegenerateGeometryError, FormatError
from .flow import FlowField, farneback_flow
from .formats import read_frame_sequence, render_viz, write_flo, write_lmap, write_pgm, write_ppm
from .looming import DetectionMask, FocusOfExpansion, LoomingMap, detect_moving, estimate_foe, looming_transform
from .raster import Frame

LOGGED_KEYS = tuple(
    f.name for f in fields(RunConfig) if f.name not in ("threads",)
)


@dataclass
class PairResult:
    index: int
    flow: FlowField
    lmap: LoomingMap
    foe: FocusOfExpansion | None
    mask: DetectionMask | None
    degenerate_reason: str | None


@dataclass
class PipelineSummary:
    pairs: int
    degenerate_pairs: int
    fps: float


def process_pair(index: int, f1: Frame, f2: Frame, cfg: RunConfig) -> PairResult:
    """Flow, transform, FoE and detection for one frame pair. Pure; thread-safe."""
    flow = farneback_flow(f1, f2, cfg.flow_params())
    lmap = looming_transform(
        flow,
        cfg.intrinsics(),
        mode=cfg.mode,
        eps_den=cfg.eps_den,
        r_max=cfg.r_max,
        tau_mag=cfg.tau_mag,
        horizontal_over_vertical=not cfg.flip_ratio,
    )
    try:
        foe = estimate_foe(flow, cfg.tau_mag)
    except DegenerateGeometryError as exc:
        return PairResult(index, flow, lmap, None, None, str(exc))
    mask = detect_moving(flow, foe, cfg.detection_params())
    return PairResult(index, flow, lmap, foe, mask, None)


def _mask_frame(mask: DetectionMask) -> Frame:
    return Frame(mask.moving.astype(float) * 255.0)


def _commit(result: PairResult, out_dir: Path, log_lines: list[str], warnings: list[str]) -> None:
    tag = f"{result.index:06d}"
    write_flo(result.flow, out_dir / f"flow_{tag}.flo")
    write_lmap(result.lmap, out_dir / f"loom_{tag}.lmap")
    write_ppm(render_viz(result.lmap), out_dir / f"viz_{tag}.ppm")
    if result.foe is not None and result.mask is not None:
        write_pgm(_mask_frame(result.mask), out_dir / f"mask_{tag}.pgm")
        log_lines.append(
            f"pair={tag} status=ok foe_x={result.foe.x0!r} foe_y={result.foe.y0!r} "
            f"rms={result.foe.rms_residual!r} condition={result.foe.condition!r} "
            f"components={len(result.mask.components)}"
        )
    else:
        log_lines.append(f"pair={tag} status=degenerate detection=skipped")
        warnings.append(f"pair {tag}: degenerate geometry, detection skipped ({result.degenerate_reason})")


def run_pipeline(cfg: RunConfig, quiet: bool = False) -> PipelineSummary:
    """Process every consecutive pair of the input sequence.

    Raises FormatError for unusable inputs; per-pair degenerate FoE is a
    warning, not a failure.
    """
    if not cfg.input:
        raise FormatError("pipeline requires an input frame directory")
    if not cfg.output:
        raise FormatError("pipeline requires an output directory")
    frames = read_frame_sequence(cfg.input)
    if len(frames) < 2:
        raise FormatError(f"{cfg.input}: need at least 2 frames, found {len(frames)}")
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    log_lines = [
        "# loomflow pipeline log",
        "# resolved configuration (execution-only keys omitted)",
    ]
    for key in LOGGED_KEYS:
        value = getattr(cfg, key)
        log_lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    log_lines.append("# per-pair results")

    warnings: list[str] = []
    n_pairs = len(frames) - 1
    workers = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    start = time.perf_counter()
    if workers == 1:
        results = (process_pair(i, frames[i], frames[i + 1], cfg) for i in range(n_pairs))
        for result in results:
            _commit(result, out_dir, log_lines, warnings)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(process_pair, i, frames[i], frames[i + 1], cfg)
                for i in range(n_pairs)
            ]
            for future in futures:  # committed in frame order
                _commit(future.result(), out_dir, log_lines, warnings)
    elapsed = time.perf_counter() - start

    with open(out_dir / "run.log", "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")

    fps = n_pairs / elapsed if elapsed > 0 else float("inf")
    if not quiet:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"pipeline: {n_pairs} pairs in {elapsed:.3f} s, throughput {fps:.2f} pairs/s")
    return PipelineSummary(n_pairs, len(warnings), fps)
