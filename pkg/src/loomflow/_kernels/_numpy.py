"""Pure numpy/scipy implementation of the hot kernels.

This is the fallback used when the compiled extension is unavailable; it
produces the same results (to floating-point reassociation) and is the
reference for the backend-parity tests.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ._common import COND_MAX, expansion_setup, window_taps

BACKEND = "numpy"


def _sep_correlate(img: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    tmp = ndimage.correlate1d(img, ky, axis=0, mode="nearest")
    return ndimage.correlate1d(tmp, kx, axis=1, mode="nearest")


def poly_expand(img: np.ndarray, poly_n: int, poly_sigma: float) -> np.ndarray:
    """Per-pixel quadratic-fit coefficients, planes ordered (c, b1, b2, a11, a22, a12)."""
    g, tg, ttg, ginv = expansion_setup(poly_n, poly_sigma)
    img = np.ascontiguousarray(img, dtype=np.float64)
    # Weighted projections onto the six basis functions; separable because the
    # applicability is a product Gaussian.
    v = np.stack([
        _sep_correlate(img, g, g),
        _sep_correlate(img, tg, g),
        _sep_correlate(img, g, tg),
        _sep_correlate(img, ttg, g),
        _sep_correlate(img, g, ttg),
        _sep_correlate(img, tg, tg),
    ])
    return np.einsum("km,mhw->khw", ginv, v, optimize=True)


def flow_update(
    e1: np.ndarray,
    e2: np.ndarray,
    prior_du: np.ndarray,
    prior_dv: np.ndarray,
    win_size: int,
    regularization: float,
    cond_max: float = COND_MAX,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One displacement refinement pass.

    Warps the second expansion by the rounded prior (nearest-pixel lookup,
    clamped), forms the local constraint A d = db with the compensation term
    for the integer warp actually applied, then aggregates A^T A and A^T db
    over a Gaussian window and solves the 2x2 system per pixel. Pixels whose
    aggregated matrix has eigenvalue ratio above cond_max keep the prior
    value and are flagged invalid.
    """
    _, h, w = e1.shape
    vv, uu = np.mgrid[0:h, 0:w]
    iu = np.clip(uu + np.rint(prior_du).astype(np.int64), 0, w - 1)
    iv = np.clip(vv + np.rint(prior_dv).astype(np.int64), 0, h - 1)
    # The warp applied after clamping, not the raw prior: the b2 lookup only
    # cancels the displacement that was actually compensated.
    wu = (iu - uu).astype(np.float64)
    wv = (iv - vv).astype(np.float64)
    e2w = e2[:, iv, iu]

    a11 = 0.5 * (e1[3] + e2w[3])
    a22 = 0.5 * (e1[4] + e2w[4])
    a12 = 0.25 * (e1[5] + e2w[5])  # quadratic-form off-diagonal is half the xy coefficient
    db1 = -0.5 * (e2w[1] - e1[1]) + a11 * wu + a12 * wv
    db2 = -0.5 * (e2w[2] - e1[2]) + a12 * wu + a22 * wv

    # A is symmetric, so A^T A = A^2.
    m11 = a11 * a11 + a12 * a12
    m12 = a12 * (a11 + a22)
    m22 = a12 * a12 + a22 * a22
    q1 = a11 * db1 + a12 * db2
    q2 = a12 * db1 + a22 * db2

    taps = window_taps(win_size)

    def smooth(a: np.ndarray) -> np.ndarray:
        return _sep_correlate(a, taps, taps)

    g11 = smooth(m11)
    g12 = smooth(m12)
    g22 = smooth(m22)
    h1 = smooth(q1)
    h2 = smooth(q2)

    trace = g11 + g22
    g11 = g11 + regularization * trace
    g22 = g22 + regularization * trace

    tr = g11 + g22
    det = g11 * g22 - g12 * g12
    disc = np.sqrt(np.maximum((g11 - g22) ** 2 + 4.0 * g12 * g12, 0.0))
    lo = 0.5 * (tr - disc)
    hi = 0.5 * (tr + disc)
    valid = (lo > 0.0) & (hi <= cond_max * lo)

    safe_det = np.where(valid, det, 1.0)
    du = np.where(valid, (g22 * h1 - g12 * h2) / safe_det, prior_du)
    dv = np.where(valid, (g11 * h2 - g12 * h1) / safe_det, prior_dv)
    return du, dv, valid
