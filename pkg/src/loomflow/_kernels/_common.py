"""Setup shared by both kernel backends.

Everything here is cheap, per-call setup; the per-pixel work lives in the
backend modules. Keeping the weight/Gram construction in one place
guarantees both backends solve exactly the same least-squares problem.
"""
from __future__ import annotations

import numpy as np

# A 2x2 structure tensor whose eigenvalue ratio exceeds this is treated as singular.
COND_MAX = 1e12


def gaussian_taps(radius: int, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized Gaussian taps exp(-t^2 / 2 sigma^2) and their offsets."""
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    return t, np.exp(-(t * t) / (2.0 * sigma * sigma))


def expansion_setup(poly_n: int, poly_sigma: float):
    """Correlation kernels and inverse Gram matrix for the quadratic fit.

    The applicability weights are identical at every pixel, so the 6x6 Gram
    matrix of the basis {1, x, y, x^2, y^2, xy} is constant and inverted once.
    Returns (g, t*g, t^2*g, Ginv) with kernels indexed from -r to +r.
    """
    if poly_n < 3 or poly_n % 2 == 0:
        raise ValueError(f"poly_n must be an odd integer >= 3, got {poly_n}")
    if poly_sigma <= 0:
        raise ValueError(f"poly_sigma must be positive, got {poly_sigma}")
    r = poly_n // 2
    t, g = gaussian_taps(r, poly_sigma)
    m0 = g.sum()
    m2 = (t * t * g).sum()
    m4 = (t ** 4 * g).sum()
    gram = np.zeros((6, 6))
    gram[0, 0] = m0 * m0
    gram[0, 3] = gram[3, 0] = m2 * m0
    gram[0, 4] = gram[4, 0] = m0 * m2
    gram[1, 1] = m2 * m0
    gram[2, 2] = m0 * m2
    gram[3, 3] = m4 * m0
    gram[4, 4] = m0 * m4
    gram[3, 4] = gram[4, 3] = m2 * m2
    gram[5, 5] = m2 * m2
    ginv = np.linalg.inv(gram)
    return g, t * g, t * t * g, ginv


def window_taps(win_size: int) -> np.ndarray:
    """Aggregation window weights: Gaussian with sigma = win_size / 5."""
    if win_size < 3 or win_size % 2 == 0:
        raise ValueError(f"win_size must be an odd integer >= 3, got {win_size}")
    _, w = gaussian_taps(win_size // 2, win_size / 5.0)
    return w
