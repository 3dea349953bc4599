"""Pure numpy versions of the compiled loops in ``_ckernels.pyx``."""
import numpy as np


def _corner(flat, shape, i, j, k, fill):
    nx, ny, nz = shape
    ok = (i >= 0) & (j >= 0) & (k >= 0) & (i < nx) & (j < ny) & (k < nz)
    vals = np.full(i.shape, fill, dtype=flat.dtype)
    vals[ok] = flat[(i[ok] * ny + j[ok]) * nz + k[ok]]
    return vals


def sample_linear(data, coords, fill):
    flat = data.ravel()
    x, y, z = coords
    fx, fy, fz = np.floor(x), np.floor(y), np.floor(z)
    i0, j0, k0 = fx.astype(np.intp), fy.astype(np.intp), fz.astype(np.intp)
    fx = x - fx
    fy = y - fy
    fz = z - fz
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    s = data.shape

    def at(di, dj, dk):
        return _corner(flat, s, i0 + di, j0 + dj, k0 + dk, fill)

    c00 = at(0, 0, 0) * gx + at(1, 0, 0) * fx
    c10 = at(0, 1, 0) * gx + at(1, 1, 0) * fx
    c01 = at(0, 0, 1) * gx + at(1, 0, 1) * fx
    c11 = at(0, 1, 1) * gx + at(1, 1, 1) * fx
    c0 = c00 * gy + c10 * fy
    c1 = c01 * gy + c11 * fy
    return c0 * gz + c1 * fz


def sample_nearest(labels, coords, fill):
    idx = np.floor(coords + 0.5).astype(np.intp)
    return _corner(labels.ravel(), labels.shape, idx[0], idx[1], idx[2], np.uint8(fill))


def convolve_rows(rows, weights, source):
    n = rows.shape[1]
    padded = rows[:, source]
    acc = np.zeros(rows.shape, dtype=np.float64)
    for k in range(weights.shape[0]):
        acc = acc + weights[k] * padded[:, k:k + n]
    return acc
