"""Looming-ratio transform, focus-of-expansion estimation and moving-object masks.

Under pure camera translation every stationary point's flow radiates from
the focus of expansion, so the per-pixel ratio of horizontal to vertical
angular rates depends only on image position, never on depth. Pixels whose
flow breaks that pattern belong to independently moving objects.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DegenerateGeometryError
from .flow import FlowField

EPS_DEN = 1e-3
R_MAX = 100.0
TAU_MAG = 0.5
TAU_DIR = 0.35
MIN_AREA = 25

FOE_COND_MAX = 1e8

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")


@dataclass(eq=False)
class AngularRates:
    """Per-pixel angular velocities (radians/frame) of the viewing ray."""

    theta_dot: np.ndarray
    phi_dot: np.ndarray
    valid: np.ndarray

    @property
    def width(self) -> int:
        return self.theta_dot.shape[1]

    @property
    def height(self) -> int:
        return self.theta_dot.shape[0]


@dataclass(eq=False)
class LoomingMap:
    """Per-pixel looming ratio. Invalid pixels carry ratio 0.

    The ratio plane is float32: that is the on-disk precision, and keeping
    it in memory makes persisted maps and scale-invariance checks bit-exact.
    """

    ratio: np.ndarray
    valid: np.ndarray
    mode: str

    def __post_init__(self) -> None:
        self.ratio = np.ascontiguousarray(self.ratio, dtype=np.float32)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if self.ratio.shape != self.valid.shape or self.ratio.ndim != 2:
            raise ValueError("ratio and valid must share a 2-D shape")
        if self.mode not in ("pixel", "angular"):
            raise ValueError(f"mode must be 'pixel' or 'angular', got {self.mode!r}")

    @property
    def width(self) -> int:
        return self.ratio.shape[1]

    @property
    def height(self) -> int:
        return self.ratio.shape[0]


@dataclass
class FocusOfExpansion:
    x0: float
    y0: float
    rms_residual: float
    condition: float


@dataclass
class Component:
    """One 4-connected detection: inclusive bbox (u0, v0, u1, v1), pixel count, centroid (u, v)."""

    bbox: tuple[int, int, int, int]
    area: int
    centroid: tuple[float, float]


@dataclass(eq=False)
class DetectionMask:
    moving: np.ndarray
    components: list[Component] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.moving.shape[1]

    @property
    def height(self) -> int:
        return self.moving.shape[0]


@dataclass
class DetectionParams:
    tau_mag: float = TAU_MAG
    tau_dir: float = TAU_DIR
    min_area: int = MIN_AREA


def pixel_to_angles(k: CameraIntrinsics, u, v):
    """Horizontal and vertical viewing angles (radians) of pixel (u, v)."""
    theta = np.arctan((np.asarray(u, dtype=np.float64) - k.cx) / k.fx)
    phi = np.arctan((np.asarray(v, dtype=np.float64) - k.cy) / k.fy)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def flow_to_angular_rates(flow: FlowField, k: CameraIntrinsics) -> AngularRates:
    """Convert pixel displacements to angular rates via the atan derivative."""
    vv, uu = np.mgrid[0:flow.height, 0:flow.width].astype(np.float64)
    theta_dot = flow.du * k.fx / (k.fx * k.fx + (uu - k.cx) ** 2)
    phi_dot = flow.dv * k.fy / (k.fy * k.fy + (vv - k.cy) ** 2)
    return AngularRates(theta_dot, phi_dot, flow.valid.copy())


def _ratio_map(
    num: np.ndarray,
    den: np.ndarray,
    base_valid: np.ndarray,
    mode: str,
    eps_den: float,
    r_max: float,
) -> LoomingMap:
    valid = base_valid & (np.abs(den) >= eps_den)
    ratio = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=ratio, where=valid)
    np.clip(ratio, -r_max, r_max, out=ratio)
    ratio[~valid] = 0.0
    return LoomingMap(ratio.astype(np.float32), valid, mode)


def looming_transform(
    flow: FlowField,
    k: CameraIntrinsics | None = None,
    mode: str = "pixel",
    eps_den: float = EPS_DEN,
    r_max: float = R_MAX,
    tau_mag: float = TAU_MAG,
    horizontal_over_vertical: bool = True,
) -> LoomingMap:
    """Per-pixel ratio of flow components (pixel mode) or angular rates (angular mode).

    A pixel is valid iff its flow is valid, the flow magnitude reaches
    tau_mag, and the denominator magnitude reaches eps_den; valid ratios are
    clamped to [-r_max, r_max]. The default orientation divides the
    horizontal rate by the vertical one; pass
    horizontal_over_vertical=False to flip the convention.
    """
    if mode == "angular":
        if k is None:
            raise ConfigError("angular mode requires camera intrinsics")
        rates = flow_to_angular_rates(flow, k)
        num, den = rates.theta_dot, rates.phi_dot
    elif mode == "pixel":
        num, den = flow.du, flow.dv
    else:
        raise ValueError(f"unknown looming mode {mode!r}")
    if not horizontal_over_vertical:
        num, den = den, num
    base = flow.valid & (np.hypot(flow.du, flow.dv) >= tau_mag)
    return _ratio_map(num, den, base, mode, eps_den, r_max)


def expected_ratio_field(
    foe: FocusOfExpansion,
    k: CameraIntrinsics | None,
    mode: str,
    dims: tuple[int, int],
    eps_den: float = EPS_DEN,
    r_max: float = R_MAX,
    horizontal_over_vertical: bool = True,
) -> LoomingMap:
    """The ratio pattern every stationary pixel must follow for a given FoE.

    dims is (width, height). Validity uses the same denominator floor as
    looming_transform, with the geometric denominator term standing in for
    measured flow.
    """
    width, height = dims
    vv, uu = np.mgrid[0:height, 0:width].astype(np.float64)
    if mode == "angular":
        if k is None:
            raise ConfigError("angular mode requires camera intrinsics")
        num = (uu - foe.x0) * k.fx / (k.fx * k.fx + (uu - k.cx) ** 2)
        den = (vv - foe.y0) * k.fy / (k.fy * k.fy + (vv - k.cy) ** 2)
    elif mode == "pixel":
        num = uu - foe.x0
        den = vv - foe.y0
    else:
        raise ValueError(f"unknown looming mode {mode!r}")
    if not horizontal_over_vertical:
        num, den = den, num
    base = np.ones((height, width), dtype=bool)
    return _ratio_map(num, den, base, mode, eps_den, r_max)


def estimate_foe(flow: FlowField, tau_mag: float = TAU_MAG) -> FocusOfExpansion:
    """Least-squares intersection of all flow lines.

    Minimizes sum of (du (v - y0) - dv (u - x0))^2 over valid pixels with
    |d| >= tau_mag via the 2x2 normal equations. Raises
    DegenerateGeometryError when the geometry leaves the FoE unconstrained
    (fewer than two usable pixels, or condition number above 1e8 as for a
    purely lateral translation).
    """
    mask = flow.valid & (np.hypot(flow.du, flow.dv) >= tau_mag)
    n = int(mask.sum())
    if n < 2:
        raise DegenerateGeometryError(f"only {n} flow vectors above tau_mag={tau_mag}")
    vv, uu = np.mgrid[0:flow.height, 0:flow.width].astype(np.float64)
    # Residual r = dv*x0 - du*y0 - (dv*u - du*v); accumulate row-major.
    a = flow.dv[mask]
    b = -flow.du[mask]
    rhs = flow.dv[mask] * uu[mask] - flow.du[mask] * vv[mask]
    n11 = float(np.sum(a * a))
    n12 = float(np.sum(a * b))
    n22 = float(np.sum(b * b))
    g1 = float(np.sum(a * rhs))
    g2 = float(np.sum(b * rhs))
    tr = n11 + n22
    det = n11 * n22 - n12 * n12
    disc = np.sqrt(max((n11 - n22) ** 2 + 4.0 * n12 * n12, 0.0))
    lo = 0.5 * (tr - disc)
    hi = 0.5 * (tr + disc)
    if lo <= 0.0 or hi > FOE_COND_MAX * lo:
        cond = np.inf if lo <= 0.0 else hi / lo
        raise DegenerateGeometryError(
            f"flow directions do not intersect (normal-matrix condition {cond:.3g})"
        )
    x0 = (n22 * g1 - n12 * g2) / det
    y0 = (n11 * g2 - n12 * g1) / det
    residual = a * x0 + b * y0 - rhs
    rms = float(np.sqrt(np.mean(residual * residual)))
    return FocusOfExpansion(float(x0), float(y0), rms, float(hi / lo))


def _labeled_components(mask: np.ndarray, min_area: int) -> tuple[np.ndarray, list[Component]]:
    labels, count = ndimage.label(mask, structure=_FOUR_CONN)
    if count == 0:
        return mask, []
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
    keep = [i + 1 for i, area in enumerate(areas) if area >= min_area]
    cleaned = np.isin(labels, keep)
    components: list[Component] = []
    slices = ndimage.find_objects(labels)
    for lab in keep:
        sl = slices[lab - 1]
        inside = labels[sl] == lab
        vs, us = np.nonzero(inside)
        u0, v0 = sl[1].start, sl[0].start
        components.append(
            Component(
                bbox=(u0, v0, sl[1].stop - 1, sl[0].stop - 1),
                area=int(inside.sum()),
                centroid=(float(us.mean() + u0), float(vs.mean() + v0)),
            )
        )
    return cleaned, components


def detect_moving(
    flow: FlowField,
    foe: FocusOfExpansion,
    params: DetectionParams | None = None,
    signed: bool = True,
) -> DetectionMask:
    """Flag pixels whose flow direction deviates from the outward radial direction.

    The deviation angle is wrapped to (-pi, pi]; a pixel moves iff
    |angle| > tau_dir. With signed=False the angle is folded onto
    [0, pi/2] first, which ignores inward/outward orientation and mirrors a
    pure unsigned ratio comparison. Components smaller than min_area are
    erased.
    """
    params = params or DetectionParams()
    vv, uu = np.mgrid[0:flow.height, 0:flow.width].astype(np.float64)
    candidates = flow.valid & (np.hypot(flow.du, flow.dv) >= params.tau_mag)
    deviation = np.arctan2(flow.dv, flow.du) - np.arctan2(vv - foe.y0, uu - foe.x0)
    deviation = np.abs((deviation + np.pi) % (2.0 * np.pi) - np.pi)
    if not signed:
        deviation = np.minimum(deviation, np.pi - deviation)
    moving = candidates & (deviation > params.tau_dir)
    cleaned, components = _labeled_components(moving, params.min_area)
    return DetectionMask(cleaned, components)
