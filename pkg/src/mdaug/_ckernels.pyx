# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled resampling and convolution loops.

Every routine mirrors ``_pykernels`` operation for operation so the two
backends return bit-identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _at(const double[:, :, ::1] v, Py_ssize_t i, Py_ssize_t j,
                       Py_ssize_t k, double fill) noexcept nogil:
    if i < 0 or j < 0 or k < 0 or i >= v.shape[0] or j >= v.shape[1] or k >= v.shape[2]:
        return fill
    return v[i, j, k]


def sample_linear(const double[:, :, ::1] data, const double[:, ::1] coords, double fill):
    cdef Py_ssize_t n = coords.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t p, i0, j0, k0
    cdef double x, y, z, fx, fy, fz, gx, gy, gz, c00, c10, c01, c11, c0, c1
    with nogil:
        for p in range(n):
            x = coords[0, p]
            y = coords[1, p]
            z = coords[2, p]
            fx = floor(x)
            fy = floor(y)
            fz = floor(z)
            i0 = <Py_ssize_t>fx
            j0 = <Py_ssize_t>fy
            k0 = <Py_ssize_t>fz
            fx = x - fx
            fy = y - fy
            fz = z - fz
            gx = 1.0 - fx
            gy = 1.0 - fy
            gz = 1.0 - fz
            c00 = _at(data, i0, j0, k0, fill) * gx + _at(data, i0 + 1, j0, k0, fill) * fx
            c10 = _at(data, i0, j0 + 1, k0, fill) * gx + _at(data, i0 + 1, j0 + 1, k0, fill) * fx
            c01 = _at(data, i0, j0, k0 + 1, fill) * gx + _at(data, i0 + 1, j0, k0 + 1, fill) * fx
            c11 = _at(data, i0, j0 + 1, k0 + 1, fill) * gx + _at(data, i0 + 1, j0 + 1, k0 + 1, fill) * fx
            c0 = c00 * gy + c10 * fy
            c1 = c01 * gy + c11 * fy
            o[p] = c0 * gz + c1 * fz
    return out


def sample_nearest(const cnp.uint8_t[:, :, ::1] labels, const double[:, ::1] coords,
                   cnp.uint8_t fill):
    cdef Py_ssize_t n = coords.shape[1]
    out = np.empty(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] o = out
    cdef Py_ssize_t p, i, j, k
    with nogil:
        for p in range(n):
            i = <Py_ssize_t>floor(coords[0, p] + 0.5)
            j = <Py_ssize_t>floor(coords[1, p] + 0.5)
            k = <Py_ssize_t>floor(coords[2, p] + 0.5)
            if (i < 0 or j < 0 or k < 0 or i >= labels.shape[0]
                    or j >= labels.shape[1] or k >= labels.shape[2]):
                o[p] = fill
            else:
                o[p] = labels[i, j, k]
    return out


def convolve_rows(const double[:, ::1] rows, const double[::1] weights,
                  const Py_ssize_t[::1] source):
    """Correlate each row with ``weights``; ``source`` maps padded to row positions."""
    cdef Py_ssize_t m = rows.shape[0], n = rows.shape[1], nk = weights.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, i, k
    cdef double acc
    with nogil:
        for r in range(m):
            for i in range(n):
                acc = 0.0
                for k in range(nk):
                    acc = acc + weights[k] * rows[r, source[i + k]]
                o[r, i] = acc
    return out
