# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: thinning passes, bilinear field sampling, disc stamps.

Must stay behaviourally identical to ``pure.py`` (the fallback backend);
``tests/test_kernels.py`` checks the two against each other.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()

BACKEND_NAME = "native"


def thin_pass(cnp.uint8_t[:, :] img, int step):
    """One Zhang-Suen subiteration (simultaneous deletion), in place."""
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] flags_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] flags = flags_arr
    cdef Py_ssize_t r, c, i
    cdef int b, a, removed = 0
    cdef int n[8]

    for r in range(1, h - 1):
        for c in range(1, w - 1):
            if img[r, c] == 0:
                continue
            n[0] = img[r - 1, c]      # P2 north
            n[1] = img[r - 1, c + 1]  # P3
            n[2] = img[r, c + 1]      # P4 east
            n[3] = img[r + 1, c + 1]  # P5
            n[4] = img[r + 1, c]      # P6 south
            n[5] = img[r + 1, c - 1]  # P7
            n[6] = img[r, c - 1]      # P8 west
            n[7] = img[r - 1, c - 1]  # P9
            b = 0
            a = 0
            for i in range(8):
                b += n[i]
                if n[i] == 0 and n[(i + 1) % 8] == 1:
                    a += 1
            if b < 2 or b > 6 or a != 1:
                continue
            if step == 0:
                if n[0] * n[2] * n[4] != 0 or n[2] * n[4] * n[6] != 0:
                    continue
            else:
                if n[0] * n[2] * n[6] != 0 or n[0] * n[4] * n[6] != 0:
                    continue
            flags[r, c] = 1
            removed += 1

    for r in range(1, h - 1):
        for c in range(1, w - 1):
            if flags[r, c]:
                img[r, c] = 0
    return removed


def sample_bilinear(cnp.float64_t[:, :] values, cnp.float64_t[:, :] pts,
                    double resolution):
    """Bilinear value + exact interpolant gradient at world (x, y) points."""
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals_arr = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grads_arr = np.empty((n, 2))
    cdef cnp.float64_t[:] vals = vals_arr
    cdef cnp.float64_t[:, :] grads = grads_arr
    cdef Py_ssize_t i, r0, c0
    cdef double u, v, fu, fv, v00, v01, v10, v11

    for i in range(n):
        u = pts[i, 0] / resolution - 0.5
        v = pts[i, 1] / resolution - 0.5
        if u < 0.0:
            u = 0.0
        elif u > w - 1 - 1e-9:
            u = w - 1 - 1e-9
        if v < 0.0:
            v = 0.0
        elif v > h - 1 - 1e-9:
            v = h - 1 - 1e-9
        c0 = <Py_ssize_t>floor(u)
        r0 = <Py_ssize_t>floor(v)
        if c0 > w - 2:
            c0 = w - 2
        if r0 > h - 2:
            r0 = h - 2
        fu = u - c0
        fv = v - r0
        v00 = values[r0, c0]
        v01 = values[r0, c0 + 1]
        v10 = values[r0 + 1, c0]
        v11 = values[r0 + 1, c0 + 1]
        vals[i] = ((1 - fv) * ((1 - fu) * v00 + fu * v01)
                   + fv * ((1 - fu) * v10 + fu * v11))
        grads[i, 0] = ((1 - fv) * (v01 - v00) + fv * (v11 - v10)) / resolution
        grads[i, 1] = ((1 - fu) * (v10 - v00) + fu * (v11 - v01)) / resolution
    return vals_arr, grads_arr


def stamp_disc(cnp.float64_t[:, :] field, double cx, double cy, double radius,
               double resolution, double band):
    """Min-combine a disc's signed distance into ``field``, windowed."""
    cdef Py_ssize_t h = field.shape[0]
    cdef Py_ssize_t w = field.shape[1]
    cdef double reach = radius + band
    cdef Py_ssize_t c_lo = <Py_ssize_t>((cx - reach) / resolution - 0.5)
    cdef Py_ssize_t c_hi = <Py_ssize_t>((cx + reach) / resolution + 0.5) + 1
    cdef Py_ssize_t r_lo = <Py_ssize_t>((cy - reach) / resolution - 0.5)
    cdef Py_ssize_t r_hi = <Py_ssize_t>((cy + reach) / resolution + 0.5) + 1
    cdef Py_ssize_t r, c
    cdef double dx, dy, d

    if c_lo < 0:
        c_lo = 0
    if r_lo < 0:
        r_lo = 0
    if c_hi > w:
        c_hi = w
    if r_hi > h:
        r_hi = h
    for r in range(r_lo, r_hi):
        dy = (r + 0.5) * resolution - cy
        for c in range(c_lo, c_hi):
            dx = (c + 0.5) * resolution - cx
            d = sqrt(dx * dx + dy * dy) - radius
            if d < field[r, c]:
                field[r, c] = d
