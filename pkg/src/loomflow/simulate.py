"""Deterministic synthetic scenes with exact ground truth.

A fronto-parallel textured board, a camera translating toward (or across)
it, and optional billboard sprites moving in their own plane. Because the
texture is an analytic function of world coordinates, rendered frames,
per-pixel flow and moving-object masks are all exact, making the module
the verification oracle for the estimation code.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowField
from .looming import CameraIntrinsics, DetectionMask, _labeled_components
from .raster import Frame

_U64 = np.uint64
_GAMMA = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_VALUE_SCALE = 255.0 / 2.0 ** 53  # top 53 hash bits -> [0, 255)


@dataclass
class Sprite:
    """Billboard at fixed depth, moving in its own plane.

    size and start are in world length-units; velocity in length-units per
    frame. albedo_offset is added to the sampled texture and clamped.
    """

    depth: float
    size: tuple[float, float]
    start: tuple[float, float]
    velocity: tuple[float, float]
    albedo_offset: float = 0.0


@dataclass
class SceneSpec:
    width: int
    height: int
    intrinsics: CameraIntrinsics
    plane_depth: float
    texture_seed: int
    texture_scale: float
    cam_velocity: tuple[float, float, float]
    frames: int
    sprites: list[Sprite] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"scene dimensions must be positive, got {self.width}x{self.height}")
        if self.frames < 1:
            raise ValueError(f"frame count must be >= 1, got {self.frames}")
        if self.texture_scale <= 0:
            raise ValueError(f"texture_scale must be positive, got {self.texture_scale}")
        tz = self.cam_velocity[2]
        if tz < 0:
            raise ValueError(f"camera z velocity must be >= 0, got {tz}")
        if self.plane_depth - self.frames * tz <= 0:
            raise ValueError(
                f"camera reaches the board: plane_depth={self.plane_depth}, "
                f"frames*Tz={self.frames * tz}"
            )
        for i, sprite in enumerate(self.sprites):
            if not sprite.depth < self.plane_depth:
                raise ValueError(f"sprite {i} depth {sprite.depth} not in front of the board")


def default_scene(frames: int = 20) -> SceneSpec:
    """The fixed desk-scale approach scene used as the reproduction target."""
    return SceneSpec(
        width=320,
        height=240,
        intrinsics=CameraIntrinsics(fx=300.0, fy=300.0, cx=160.0, cy=120.0),
        plane_depth=40.0,
        texture_seed=7,
        texture_scale=0.8,
        cam_velocity=(0.0, 0.0, 0.5),
        frames=frames,
    )


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def _corner_hash(seed: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Avalanche hash of (seed, i, j); all arithmetic mod 2^64."""
    with np.errstate(over="ignore"):
        z = _mix64(_U64(seed & 0xFFFFFFFFFFFFFFFF) + _GAMMA)
        z = _mix64((z ^ i.astype(_U64)) + _GAMMA)
        z = _mix64((z ^ j.astype(_U64)) + _GAMMA)
    return z


def texture_value(seed: int, x, y, scale: float):
    """Value noise: hashed lattice corners, bilinearly interpolated.

    Bit-reproducible across platforms (integer hash, fixed float evaluation
    order). Accepts scalars or arrays; values lie in [0, 255].
    """
    if scale <= 0:
        raise ValueError(f"texture scale must be positive, got {scale}")
    gx = np.asarray(x, dtype=np.float64) / scale
    gy = np.asarray(y, dtype=np.float64) / scale
    i0 = np.floor(gx)
    j0 = np.floor(gy)
    fx = gx - i0
    fy = gy - j0
    i0 = i0.astype(np.int64)
    j0 = j0.astype(np.int64)

    def corner(i: np.ndarray, j: np.ndarray) -> np.ndarray:
        h = _corner_hash(seed, i, j)
        return (h >> _U64(11)).astype(np.float64) * _VALUE_SCALE

    v00 = corner(i0, j0)
    v10 = corner(i0 + 1, j0)
    v01 = corner(i0, j0 + 1)
    v11 = corner(i0 + 1, j0 + 1)
    out = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    if out.ndim == 0:
        return float(out)
    return out


def _camera_depth(s: SceneSpec, t: int, plane_z: float) -> float:
    z = plane_z - t * s.cam_velocity[2]
    if z <= 0:
        raise ValueError(f"camera at or behind plane (depth {plane_z}) at frame {t}")
    return z


def _sprite_center(sprite: Sprite, t: int) -> tuple[float, float]:
    return (
        sprite.start[0] + t * sprite.velocity[0],
        sprite.start[1] + t * sprite.velocity[1],
    )


def _backproject(s: SceneSpec, t: int, u, v, plane_z: float):
    """World (X, Y) where the ray through pixel (u, v) meets the given plane at frame t."""
    k = s.intrinsics
    tx, ty, _ = s.cam_velocity
    zc = _camera_depth(s, t, plane_z)
    x = t * tx + zc * (np.asarray(u, np.float64) - k.cx) / k.fx
    y = t * ty + zc * (np.asarray(v, np.float64) - k.cy) / k.fy
    return x, y


def sample_scene(s: SceneSpec, t: int, u, v):
    """Scene intensity seen at (possibly fractional) pixel coordinates at frame t.

    This is the continuous image the renderer samples at pixel centers; the
    brightness-constancy property is exact through this function.
    """
    x, y = _backproject(s, t, u, v, s.plane_depth)
    img = texture_value(s.texture_seed, x, y, s.texture_scale)
    img = np.asarray(img, dtype=np.float64)
    for sprite in s.sprites:
        xs, ys = _backproject(s, t, u, v, sprite.depth)
        cx_t, cy_t = _sprite_center(sprite, t)
        inside = (np.abs(xs - cx_t) <= sprite.size[0] / 2.0) & (
            np.abs(ys - cy_t) <= sprite.size[1] / 2.0
        )
        # Texture rides with the sprite so its pattern translates rigidly.
        tex = texture_value(s.texture_seed, xs - cx_t, ys - cy_t, s.texture_scale)
        img = np.where(inside, np.clip(tex + sprite.albedo_offset, 0.0, 255.0), img)
    return img


def render_frame(s: SceneSpec, t: int) -> Frame:
    """Render frame t at pixel centers, no anti-aliasing."""
    if not 0 <= t < s.frames:
        raise ValueError(f"frame index {t} outside [0, {s.frames})")
    vv, uu = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
    return Frame(sample_scene(s, t, uu, vv), time_index=t)


def _sprite_footprint(s: SceneSpec, t: int, sprite: Sprite, uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
    xs, ys = _backproject(s, t, uu, vv, sprite.depth)
    cx_t, cy_t = _sprite_center(sprite, t)
    return (np.abs(xs - cx_t) <= sprite.size[0] / 2.0) & (np.abs(ys - cy_t) <= sprite.size[1] / 2.0)


def _radial_flow(
    uu: np.ndarray,
    vv: np.ndarray,
    k: CameraIntrinsics,
    depth_at_t: float,
    tx: float,
    ty: float,
    tz: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact frame-to-frame displacement of points on a fixed plane.

    With relative translation (tx, ty, tz) and camera-to-plane depth Z at
    the current frame, the displacement radiates from the FoE with gain
    tz / (Z - tz); for tz = 0 it is a uniform field.
    """
    if tz > 0:
        x0 = k.cx + k.fx * tx / tz
        y0 = k.cy + k.fy * ty / tz
        gain = tz / (depth_at_t - tz)
        return gain * (uu - x0), gain * (vv - y0)
    du = np.full(uu.shape, -k.fx * tx / depth_at_t)
    dv = np.full(vv.shape, -k.fy * ty / depth_at_t)
    return du, dv


def true_flow(s: SceneSpec, t: int) -> FlowField:
    """Exact displacement field from frame t to t+1; every pixel valid."""
    if not 0 <= t < s.frames - 1:
        raise ValueError(f"flow frame index {t} outside [0, {s.frames - 1})")
    tx, ty, tz = s.cam_velocity
    vv, uu = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
    zc = _camera_depth(s, t, s.plane_depth)
    du, dv = _radial_flow(uu, vv, s.intrinsics, zc, tx, ty, tz)
    for sprite in s.sprites:
        zs = _camera_depth(s, t, sprite.depth)
        inside = _sprite_footprint(s, t, sprite, uu, vv)
        sdu, sdv = _radial_flow(
            uu, vv, s.intrinsics, zs, tx - sprite.velocity[0], ty - sprite.velocity[1], tz
        )
        du = np.where(inside, sdu, du)
        dv = np.where(inside, sdv, dv)
    return FlowField(du, dv, np.ones((s.height, s.width), dtype=bool))


def true_foe(s: SceneSpec) -> tuple[float, float]:
    """FoE of the camera translation; requires forward motion (Tz > 0)."""
    tx, ty, tz = s.cam_velocity
    if tz <= 0:
        raise ValueError("FoE is at infinity for a camera with no forward motion")
    k = s.intrinsics
    return k.cx + k.fx * tx / tz, k.cy + k.fy * ty / tz


def true_mask(s: SceneSpec, t: int, min_area: int = 1) -> DetectionMask:
    """Ground-truth moving mask: sprite pixels whose image motion direction
    deviates from the stationary background field by more than 1e-6 rad."""
    if not 0 <= t < s.frames - 1:
        raise ValueError(f"mask frame index {t} outside [0, {s.frames - 1})")
    tx, ty, tz = s.cam_velocity
    vv, uu = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
    zc = _camera_depth(s, t, s.plane_depth)
    bdu, bdv = _radial_flow(uu, vv, s.intrinsics, zc, tx, ty, tz)
    moving = np.zeros((s.height, s.width), dtype=bool)
    for sprite in s.sprites:
        zs = _camera_depth(s, t, sprite.depth)
        inside = _sprite_footprint(s, t, sprite, uu, vv)
        sdu, sdv = _radial_flow(
            uu, vv, s.intrinsics, zs, tx - sprite.velocity[0], ty - sprite.velocity[1], tz
        )
        smag = np.hypot(sdu, sdv)
        bmag = np.hypot(bdu, bdv)
        diff = np.arctan2(sdv, sdu) - np.arctan2(bdv, bdu)
        diff = np.abs((diff + np.pi) % (2.0 * np.pi) - np.pi)
        deviates = np.where(bmag > 0, diff > 1e-6, smag > 0)
        # Later sprites occlude earlier ones, so overwrite inside the footprint.
        moving = np.where(inside, deviates, moving)
    cleaned, components = _labeled_components(moving, min_area)
    return DetectionMask(cleaned, components)
