# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled implementation of the hot kernels.

Functionally identical to the numpy backend (same weights, same Gram
matrix, same warp and solve rules); fused loops avoid the large
temporaries of the vectorized path. Single-threaded by design so results
are bit-deterministic for any caller-side thread count.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport rint, sqrt

from ._common import COND_MAX, expansion_setup, window_taps

cnp.import_array()

BACKEND = "native"


cdef void _correlate_v(const double[:, ::1] src, const double[::1] taps,
                       double[:, ::1] dst) noexcept nogil:
    """Vertical correlation with replicate-edge clamping."""
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t r = taps.shape[0] // 2
    cdef Py_ssize_t y, x, k, yy
    cdef double acc
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for k in range(2 * r + 1):
                yy = y + k - r
                if yy < 0:
                    yy = 0
                elif yy >= h:
                    yy = h - 1
                acc += taps[k] * src[yy, x]
            dst[y, x] = acc


cdef void _correlate_h(const double[:, ::1] src, const double[::1] taps,
                       double[:, ::1] dst) noexcept nogil:
    """Horizontal correlation with replicate-edge clamping."""
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t r = taps.shape[0] // 2
    cdef Py_ssize_t y, x, k, xx
    cdef double acc
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for k in range(2 * r + 1):
                xx = x + k - r
                if xx < 0:
                    xx = 0
                elif xx >= w:
                    xx = w - 1
                acc += taps[k] * src[y, xx]
            dst[y, x] = acc


def poly_expand(img, int poly_n, double poly_sigma):
    """Per-pixel quadratic-fit coefficients, planes ordered (c, b1, b2, a11, a22, a12)."""
    g_arr, tg_arr, ttg_arr, ginv_arr = expansion_setup(poly_n, poly_sigma)
    cdef double[::1] g = np.ascontiguousarray(g_arr)
    cdef double[::1] tg = np.ascontiguousarray(tg_arr)
    cdef double[::1] ttg = np.ascontiguousarray(ttg_arr)
    cdef double[:, ::1] ginv = np.ascontiguousarray(ginv_arr)

    cdef double[:, ::1] image = np.ascontiguousarray(img, dtype=np.float64)
    cdef Py_ssize_t h = image.shape[0], w = image.shape[1]

    vert = np.empty((3, h, w), dtype=np.float64)
    cdef double[:, :, ::1] vgrid = vert
    proj = np.empty((6, h, w), dtype=np.float64)
    cdef double[:, :, ::1] v = proj
    out = np.empty((6, h, w), dtype=np.float64)
    cdef double[:, :, ::1] coeffs = out

    cdef Py_ssize_t y, x, k, m
    cdef double acc
    with nogil:
        # Vertical passes with g, t*g, t^2*g; horizontal passes combine them
        # into the six weighted basis projections.
        _correlate_v(image, g, vgrid[0])
        _correlate_v(image, tg, vgrid[1])
        _correlate_v(image, ttg, vgrid[2])
        _correlate_h(vgrid[0], g, v[0])    # <1>
        _correlate_h(vgrid[0], tg, v[1])   # <x>
        _correlate_h(vgrid[1], g, v[2])    # <y>
        _correlate_h(vgrid[0], ttg, v[3])  # <x^2>
        _correlate_h(vgrid[2], g, v[4])    # <y^2>
        _correlate_h(vgrid[1], tg, v[5])   # <xy>
        for k in range(6):
            for y in range(h):
                for x in range(w):
                    acc = 0.0
                    for m in range(6):
                        acc += ginv[k, m] * v[m, y, x]
                    coeffs[k, y, x] = acc
    return out


def flow_update(e1, e2, prior_du, prior_dv, int win_size, double regularization,
                double cond_max=COND_MAX):
    """One displacement refinement pass; see the numpy backend for the contract."""
    cdef double[:, :, ::1] c1 = np.ascontiguousarray(e1, dtype=np.float64)
    cdef double[:, :, ::1] c2 = np.ascontiguousarray(e2, dtype=np.float64)
    cdef double[:, ::1] pdu = np.ascontiguousarray(prior_du, dtype=np.float64)
    cdef double[:, ::1] pdv = np.ascontiguousarray(prior_dv, dtype=np.float64)
    cdef double[::1] taps = np.ascontiguousarray(window_taps(win_size))

    cdef Py_ssize_t h = c1.shape[1], w = c1.shape[2]
    point = np.empty((5, h, w), dtype=np.float64)
    cdef double[:, :, ::1] pt = point
    smooth = np.empty((5, h, w), dtype=np.float64)
    cdef double[:, :, ::1] sm = smooth
    tmp = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] scratch = tmp

    du_out = np.empty((h, w), dtype=np.float64)
    dv_out = np.empty((h, w), dtype=np.float64)
    valid_out = np.empty((h, w), dtype=np.uint8)
    cdef double[:, ::1] du = du_out
    cdef double[:, ::1] dv = dv_out
    cdef cnp.uint8_t[:, ::1] valid = valid_out

    cdef Py_ssize_t y, x, k, iu, iv
    cdef double wu, wv, a11, a22, a12, db1, db2
    cdef double g11, g12, g22, h1, h2, tr, det, disc, lo, hi

    with nogil:
        for y in range(h):
            for x in range(w):
                iu = x + <Py_ssize_t>rint(pdu[y, x])
                if iu < 0:
                    iu = 0
                elif iu >= w:
                    iu = w - 1
                iv = y + <Py_ssize_t>rint(pdv[y, x])
                if iv < 0:
                    iv = 0
                elif iv >= h:
                    iv = h - 1
                # Compensate exactly the integer warp applied, not the raw prior.
                wu = <double>(iu - x)
                wv = <double>(iv - y)
                a11 = 0.5 * (c1[3, y, x] + c2[3, iv, iu])
                a22 = 0.5 * (c1[4, y, x] + c2[4, iv, iu])
                a12 = 0.25 * (c1[5, y, x] + c2[5, iv, iu])
                db1 = -0.5 * (c2[1, iv, iu] - c1[1, y, x]) + a11 * wu + a12 * wv
                db2 = -0.5 * (c2[2, iv, iu] - c1[2, y, x]) + a12 * wu + a22 * wv
                pt[0, y, x] = a11 * a11 + a12 * a12
                pt[1, y, x] = a12 * (a11 + a22)
                pt[2, y, x] = a12 * a12 + a22 * a22
                pt[3, y, x] = a11 * db1 + a12 * db2
                pt[4, y, x] = a12 * db1 + a22 * db2
        for k in range(5):
            _correlate_v(pt[k], taps, scratch)
            _correlate_h(scratch, taps, sm[k])
        for y in range(h):
            for x in range(w):
                g11 = sm[0, y, x]
                g12 = sm[1, y, x]
                g22 = sm[2, y, x]
                h1 = sm[3, y, x]
                h2 = sm[4, y, x]
                tr = g11 + g22
                g11 = g11 + regularization * tr
                g22 = g22 + regularization * tr
                tr = g11 + g22
                det = g11 * g22 - g12 * g12
                disc = (g11 - g22) * (g11 - g22) + 4.0 * g12 * g12
                disc = sqrt(disc if disc > 0.0 else 0.0)
                lo = 0.5 * (tr - disc)
                hi = 0.5 * (tr + disc)
                if lo > 0.0 and hi <= cond_max * lo:
                    du[y, x] = (g22 * h1 - g12 * h2) / det
                    dv[y, x] = (g11 * h2 - g12 * h1) / det
                    valid[y, x] = 1
                else:
                    du[y, x] = pdu[y, x]
                    dv[y, x] = pdv[y, x]
                    valid[y, x] = 0
    return du_out, dv_out, valid_out.astype(bool)
