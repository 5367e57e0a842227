"""Dense two-frame optical flow via quadratic polynomial expansion.

Each frame is modeled locally as f(x) ~ x^T A x + b^T x + c; the
displacement between two expansions follows from how the linear term
shifts. A coarse-to-fine pyramid handles motions larger than the
expansion window.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .raster import Frame, downsample_half

MIN_FLOW_DIM = 16

# Index order of the coefficient planes in PolyExpansion.coeffs.
_C, _B1, _B2, _A11, _A22, _A12 = range(6)


@dataclass
class FlowParams:
    """Parameters of the coarse-to-fine estimator.

    regularization is dimensionless: the aggregated structure tensor gets
    regularization * trace added to its diagonal before the per-pixel solve.
    """

    levels: int = 3
    iterations_per_level: int = 3
    poly_n: int = 7
    poly_sigma: float = 1.5
    win_size: int = 15
    regularization: float = 1e-9

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.iterations_per_level < 1:
            raise ValueError(f"iterations_per_level must be >= 1, got {self.iterations_per_level}")
        if self.poly_n < 3 or self.poly_n % 2 == 0:
            raise ValueError(f"poly_n must be odd and >= 3, got {self.poly_n}")
        if self.poly_sigma <= 0:
            raise ValueError(f"poly_sigma must be > 0, got {self.poly_sigma}")
        if self.win_size < 3 or self.win_size % 2 == 0:
            raise ValueError(f"win_size must be odd and >= 3, got {self.win_size}")
        if self.regularization < 0:
            raise ValueError(f"regularization must be >= 0, got {self.regularization}")


@dataclass(eq=False)
class PolyExpansion:
    """Per-pixel quadratic model coefficients, planes (c, b1, b2, a11, a22, a12)."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 3 or self.coeffs.shape[0] != 6:
            raise ValueError(f"expansion coefficients must have shape (6, h, w), got {self.coeffs.shape}")

    @property
    def width(self) -> int:
        return self.coeffs.shape[2]

    @property
    def height(self) -> int:
        return self.coeffs.shape[1]

    @property
    def c(self) -> np.ndarray:
        return self.coeffs[_C]

    @property
    def b1(self) -> np.ndarray:
        return self.coeffs[_B1]

    @property
    def b2(self) -> np.ndarray:
        return self.coeffs[_B2]

    @property
    def a11(self) -> np.ndarray:
        return self.coeffs[_A11]

    @property
    def a22(self) -> np.ndarray:
        return self.coeffs[_A22]

    @property
    def a12(self) -> np.ndarray:
        return self.coeffs[_A12]


@dataclass(eq=False)
class FlowField:
    """Per-pixel displacement in px/frame with a validity mask."""

    du: np.ndarray
    dv: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.du = np.ascontiguousarray(self.du, dtype=np.float64)
        self.dv = np.ascontiguousarray(self.dv, dtype=np.float64)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if not (self.du.shape == self.dv.shape == self.valid.shape) or self.du.ndim != 2:
            raise ValueError("du, dv and valid must share a 2-D shape")
        if not np.isfinite(self.du[self.valid]).all() or not np.isfinite(self.dv[self.valid]).all():
            raise ValueError("flow must be finite wherever valid")

    @property
    def width(self) -> int:
        return self.du.shape[1]

    @property
    def height(self) -> int:
        return self.du.shape[0]

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(
            np.zeros((height, width)),
            np.zeros((height, width)),
            np.ones((height, width), dtype=bool),
        )


def poly_expand(frame: Frame, poly_n: int = 7, poly_sigma: float = 1.5) -> PolyExpansion:
    """Weighted least-squares quadratic expansion at every pixel.

    Gaussian applicability over a poly_n x poly_n window, replicate-edge
    padding. A constant frame yields c = const, b = 0, A = 0 everywhere.
    """
    if frame.width < poly_n or frame.height < poly_n:
        raise ValueError(
            f"frame {frame.width}x{frame.height} smaller than expansion window {poly_n}"
        )
    return PolyExpansion(_kernels.poly_expand(frame.pixels, poly_n, poly_sigma))


def displacement_step(
    e1: PolyExpansion,
    e2: PolyExpansion,
    prior: FlowField,
    win_size: int = 15,
    regularization: float = 1e-9,
) -> FlowField:
    """Refine a prior flow field from two polynomial expansions.

    The second expansion is looked up at the rounded, clamped prior
    displacement (nearest-pixel warp); per-pixel constraints are aggregated
    over a Gaussian window (sigma = win_size / 5) and solved as a 2x2
    system. Numerically singular pixels (eigenvalue ratio > 1e12) keep the
    prior value and are marked invalid.
    """
    if e1.coeffs.shape != e2.coeffs.shape:
        raise ValueError(f"expansion shapes differ: {e1.coeffs.shape} vs {e2.coeffs.shape}")
    if (prior.height, prior.width) != (e1.height, e1.width):
        raise ValueError(
            f"prior flow {prior.height}x{prior.width} does not match expansions {e1.height}x{e1.width}"
        )
    du, dv, valid = _kernels.flow_update(
        e1.coeffs, e2.coeffs, prior.du, prior.dv, win_size, regularization
    )
    return FlowField(du, dv, valid)


def _upsample_double(du: np.ndarray, dv: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear upsampling of a flow field to the next-finer pyramid level.

    Coarse pixel i sits at fine coordinate 2i (decimation keeps even
    indices), so the fine grid samples the coarse field at half coordinates;
    values double because displacements are measured in pixels.
    """
    h, w = shape
    ch, cw = du.shape
    vv, uu = np.mgrid[0:h, 0:w]
    uc = uu * 0.5
    vc = vv * 0.5
    u0 = np.minimum(uc.astype(np.int64), cw - 1)
    v0 = np.minimum(vc.astype(np.int64), ch - 1)
    u1 = np.minimum(u0 + 1, cw - 1)
    v1 = np.minimum(v0 + 1, ch - 1)
    fu = uc - u0
    fv = vc - v0

    def bil(a: np.ndarray) -> np.ndarray:
        top = (1.0 - fu) * a[v0, u0] + fu * a[v0, u1]
        bot = (1.0 - fu) * a[v1, u0] + fu * a[v1, u1]
        return (1.0 - fv) * top + fv * bot

    return 2.0 * bil(du), 2.0 * bil(dv)


def farneback_flow(f1: Frame, f2: Frame, params: FlowParams | None = None) -> FlowField:
    """Coarse-to-fine dense flow between two frames of equal dimensions."""
    params = params or FlowParams()
    if (f1.width, f1.height) != (f2.width, f2.height):
        raise ValueError(
            f"frame dimensions differ: {f1.width}x{f1.height} vs {f2.width}x{f2.height}"
        )
    if f1.width < MIN_FLOW_DIM or f1.height < MIN_FLOW_DIM:
        raise ValueError(
            f"frames must be at least {MIN_FLOW_DIM}x{MIN_FLOW_DIM}, got {f1.width}x{f1.height}"
        )

    pyr1 = [f1]
    pyr2 = [f2]
    for _ in range(params.levels - 1):
        pyr1.append(downsample_half(pyr1[-1]))
        pyr2.append(downsample_half(pyr2[-1]))
    coarsest = pyr1[-1]
    if min(coarsest.width, coarsest.height) < params.poly_n:
        raise ValueError(
            f"coarsest level {coarsest.width}x{coarsest.height} smaller than poly_n={params.poly_n}; "
            f"reduce levels"
        )

    flow = FlowField.zeros(coarsest.height, coarsest.width)
    for level in range(params.levels - 1, -1, -1):
        e1 = poly_expand(pyr1[level], params.poly_n, params.poly_sigma)
        e2 = poly_expand(pyr2[level], params.poly_n, params.poly_sigma)
        for _ in range(params.iterations_per_level):
            flow = displacement_step(e1, e2, flow, params.win_size, params.regularization)
        if level > 0:
            target = (pyr1[level - 1].height, pyr1[level - 1].width)
            du, dv = _upsample_double(flow.du, flow.dv, target)
            flow = FlowField(du, dv, np.ones(target, dtype=bool))
    return flow
