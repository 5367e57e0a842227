"""Flat key=value configuration: scene files and pipeline run configuration.

Precedence for run configuration, lowest to highest: built-in defaults,
the THREADS environment variable (thread count only), the config file,
command-line flags.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, FormatError
from .flow import FlowParams
from .looming import CameraIntrinsics, DetectionParams
from .simulate import SceneSpec, Sprite, default_scene

_SPRITE_KEY = re.compile(r"^sprite\.(\d+)\.(depth|size_w|size_h|start_x|start_y|vel_x|vel_y|albedo)$")

SCENE_SCALAR_KEYS = (
    "width", "height", "fx", "fy", "cx", "cy", "plane_depth",
    "texture_seed", "texture_scale", "vel_x", "vel_y", "vel_z", "frames",
)


def parse_kv_file(path) -> dict[str, str]:
    """One ``key=value`` per line; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _parse_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise FormatError(f"{key}: expected a boolean, got {value!r}")


def scene_from_mapping(values: Mapping[str, str]) -> SceneSpec:
    """Build a SceneSpec from string key=value pairs.

    Unset scalar keys fall back to the default desk-scale scene. Sprites use
    ``sprite.N.field`` keys; indices must form 0..K-1 with all eight fields.
    """
    base = default_scene()
    scalars: dict[str, float] = {
        "width": base.width, "height": base.height,
        "fx": base.intrinsics.fx, "fy": base.intrinsics.fy,
        "cx": base.intrinsics.cx, "cy": base.intrinsics.cy,
        "plane_depth": base.plane_depth, "texture_seed": base.texture_seed,
        "texture_scale": base.texture_scale,
        "vel_x": 0.0, "vel_y": 0.0, "vel_z": base.cam_velocity[2],
        "frames": base.frames,
    }
    sprite_values: dict[int, dict[str, float]] = {}
    for key, value in values.items():
        m = _SPRITE_KEY.match(key)
        if m:
            try:
                sprite_values.setdefault(int(m.group(1)), {})[m.group(2)] = float(value)
            except ValueError as exc:
                raise FormatError(f"{key}: non-numeric value {value!r}") from exc
            continue
        if key not in SCENE_SCALAR_KEYS:
            raise FormatError(f"unknown scene key {key!r}")
        try:
            scalars[key] = float(value)
        except ValueError as exc:
            raise FormatError(f"{key}: non-numeric value {value!r}") from exc

    sprites = []
    for i in range(len(sprite_values)):
        if i not in sprite_values:
            raise FormatError(f"sprite indices must be contiguous from 0; missing sprite.{i}")
        sv = sprite_values[i]
        missing = {"depth", "size_w", "size_h", "start_x", "start_y", "vel_x", "vel_y", "albedo"} - set(sv)
        if missing:
            raise FormatError(f"sprite.{i} missing fields: {sorted(missing)}")
        sprites.append(
            Sprite(
                depth=sv["depth"],
                size=(sv["size_w"], sv["size_h"]),
                start=(sv["start_x"], sv["start_y"]),
                velocity=(sv["vel_x"], sv["vel_y"]),
                albedo_offset=sv["albedo"],
            )
        )
    return SceneSpec(
        width=int(scalars["width"]),
        height=int(scalars["height"]),
        intrinsics=CameraIntrinsics(scalars["fx"], scalars["fy"], scalars["cx"], scalars["cy"]),
        plane_depth=scalars["plane_depth"],
        texture_seed=int(scalars["texture_seed"]),
        texture_scale=scalars["texture_scale"],
        cam_velocity=(scalars["vel_x"], scalars["vel_y"], scalars["vel_z"]),
        frames=int(scalars["frames"]),
        sprites=sprites,
    )


def scene_to_mapping(s: SceneSpec) -> dict[str, str]:
    out = {
        "width": str(s.width), "height": str(s.height),
        "fx": repr(s.intrinsics.fx), "fy": repr(s.intrinsics.fy),
        "cx": repr(s.intrinsics.cx), "cy": repr(s.intrinsics.cy),
        "plane_depth": repr(s.plane_depth),
        "texture_seed": str(s.texture_seed),
        "texture_scale": repr(s.texture_scale),
        "vel_x": repr(s.cam_velocity[0]),
        "vel_y": repr(s.cam_velocity[1]),
        "vel_z": repr(s.cam_velocity[2]),
        "frames": str(s.frames),
    }
    for i, sp in enumerate(s.sprites):
        out[f"sprite.{i}.depth"] = repr(sp.depth)
        out[f"sprite.{i}.size_w"] = repr(sp.size[0])
        out[f"sprite.{i}.size_h"] = repr(sp.size[1])
        out[f"sprite.{i}.start_x"] = repr(sp.start[0])
        out[f"sprite.{i}.start_y"] = repr(sp.start[1])
        out[f"sprite.{i}.vel_x"] = repr(sp.velocity[0])
        out[f"sprite.{i}.vel_y"] = repr(sp.velocity[1])
        out[f"sprite.{i}.albedo"] = repr(sp.albedo_offset)
    return out


def read_scene_file(path) -> SceneSpec:
    return scene_from_mapping(parse_kv_file(path))


def write_scene_file(s: SceneSpec, path) -> None:
    mapping = scene_to_mapping(s)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")


@dataclass
class RunConfig:
    """Fully resolved pipeline configuration; every field has a value."""

    input: str | None = None
    output: str | None = None
    levels: int = 3
    iterations_per_level: int = 3
    poly_n: int = 7
    poly_sigma: float = 1.5
    win_size: int = 15
    regularization: float = 1e-9
    eps_den: float = 1e-3
    r_max: float = 100.0
    tau_mag: float = 0.5
    tau_dir: float = 0.35
    min_area: int = 25
    mode: str = "pixel"
    fx: float | None = None
    fy: float | None = None
    cx: float | None = None
    cy: float | None = None
    flip_ratio: bool = False
    threads: int = 0

    def flow_params(self) -> FlowParams:
        return FlowParams(
            levels=self.levels,
            iterations_per_level=self.iterations_per_level,
            poly_n=self.poly_n,
            poly_sigma=self.poly_sigma,
            win_size=self.win_size,
            regularization=self.regularization,
        )

    def detection_params(self) -> DetectionParams:
        return DetectionParams(tau_mag=self.tau_mag, tau_dir=self.tau_dir, min_area=self.min_area)

    def intrinsics(self) -> CameraIntrinsics | None:
        given = [v for v in (self.fx, self.fy, self.cx, self.cy) if v is not None]
        if not given:
            return None
        if len(given) != 4:
            raise ConfigError("fx, fy, cx, cy must be given together")
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    if value is None or not isinstance(value, str):
        return value
    ftype = _FIELD_TYPES[key]
    if key in ("input", "output", "mode"):
        return value
    if key == "flip_ratio":
        return _parse_bool(value, key)
    if ftype in ("int", int):
        try:
            return int(value)
        except ValueError as exc:
            raise FormatError(f"{key}: expected an integer, got {value!r}") from exc
    try:
        return float(value)
    except ValueError as exc:
        raise FormatError(f"{key}: expected a number, got {value!r}") from exc


def resolve_config(
    flag_values: Mapping[str, Any] | None = None,
    config_path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Layer defaults, THREADS env var, config file and flags into a RunConfig.

    flag_values entries that are None count as "not given".
    """
    cfg = RunConfig()
    if env is not None and "THREADS" in env:
        cfg.threads = _coerce("threads", env["THREADS"])
    if config_path is not None:
        for key, value in parse_kv_file(config_path).items():
            if key not in _FIELD_TYPES:
                raise FormatError(f"unknown configuration key {key!r}")
            setattr(cfg, key, _coerce(key, value))
    if flag_values:
        for key, value in flag_values.items():
            if key in _FIELD_TYPES and value is not None:
                setattr(cfg, key, _coerce(key, value))
    if cfg.mode not in ("pixel", "angular"):
        raise ConfigError(f"mode must be 'pixel' or 'angular', got {cfg.mode!r}")
    if cfg.threads < 0:
        raise ConfigError(f"threads must be >= 0, got {cfg.threads}")
    return cfg
