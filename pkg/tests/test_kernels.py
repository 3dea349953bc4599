import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdaug import kernels

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def trilinear_oracle(data, point, fill):
    """Weighted sum over the 8 surrounding corners."""
    base = np.floor(point).astype(int)
    frac = point - base
    total = 0.0
    for corner in itertools.product((0, 1), repeat=3):
        idx = base + corner
        w = np.prod([f if c else 1 - f for f, c in zip(frac, corner)])
        inside = all(0 <= i < n for i, n in zip(idx, data.shape))
        total += w * (data[tuple(idx)] if inside else fill)
    return total


@pytest.mark.parametrize("backend", BACKENDS)
def test_sample_linear_matches_corner_oracle(backend, rng):
    data = rng.normal(size=(5, 4, 3))
    coords = rng.uniform(-1.5, 5.5, size=(3, 200))
    with kernels.use_backend(backend):
        got = kernels.sample_linear(data, coords, -7.0)
    expected = [trilinear_oracle(data, coords[:, i], -7.0) for i in range(coords.shape[1])]
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_sample_linear_integer_coords_exact(backend, rng):
    data = rng.normal(size=(4, 5, 6))
    grid = np.indices(data.shape, dtype=np.float64).reshape(3, -1)
    with kernels.use_backend(backend):
        got = kernels.sample_linear(data, grid, 0.0)
    assert np.array_equal(got, data.ravel())


@pytest.mark.parametrize("backend", BACKENDS)
def test_sample_nearest(backend):
    labels = np.arange(8, dtype=np.uint8).reshape(2, 2, 2) % 4
    coords = np.array([[0.49, 0.5, 1.4, -0.6, 2.0], [0, 0, 1, 0, 0], [0, 1.2, 0, 0, 0]], float)
    with kernels.use_backend(backend):
        got = kernels.sample_nearest(labels, coords, 0)
    assert list(got) == [labels[0, 0, 0], labels[1, 0, 1], labels[1, 1, 0], 0, 0]


def test_reflect_indices_match_numpy_symmetric_pad():
    for n in (1, 2, 5):
        for r in (1, 3, 12):
            expected = np.pad(np.arange(n), r, mode="symmetric")
            np.testing.assert_array_equal(kernels.reflect_indices(n, r), expected)


def direct_convolution_3d(data, w1d, axes):
    """Brute-force 3D correlation with the outer-product kernel and reflected reads."""
    r = w1d.size // 2
    offsets = [range(-r, r + 1) if ax in axes else range(0, 1) for ax in range(3)]
    weights = {ax: (w1d if ax in axes else np.array([1.0])) for ax in range(3)}
    refl = [np.pad(np.arange(n), r, mode="symmetric") for n in data.shape]
    out = np.zeros_like(data)
    nx, ny, nz = data.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                acc = 0.0
                for a in offsets[0]:
                    wa = weights[0][a + r if 0 in axes else 0]
                    ii = refl[0][i + a + r]
                    for b in offsets[1]:
                        wb = weights[1][b + r if 1 in axes else 0]
                        jj = refl[1][j + b + r]
                        for c in offsets[2]:
                            wc = weights[2][c + r if 2 in axes else 0]
                            acc += wa * wb * wc * data[ii, jj, refl[2][k + c + r]]
                out[i, j, k] = acc
    return out


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("sigma,axes", [(0.7, (0, 1, 2)), (1.0, (0, 1)), (3.0, (0, 1, 2))])
def test_separable_blur_equals_direct_convolution(backend, sigma, axes, rng):
    data = rng.normal(size=(8, 8, 8))
    w = kernels.gaussian_kernel(sigma)
    with kernels.use_backend(backend):
        got = kernels.gaussian_smooth(data, sigma, axes)
    np.testing.assert_allclose(got, direct_convolution_3d(data, w, axes), rtol=0, atol=1e-9)
    assert abs(got.sum() - data.sum()) < 1e-6


def test_gaussian_kernel_shape():
    w = kernels.gaussian_kernel(1.2)
    assert w.size == 2 * 4 + 1  # radius ceil(3.6)
    assert abs(w.sum() - 1) < 1e-15
    np.testing.assert_array_equal(w, w[::-1])


@needs_both
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1),
       st.floats(0.3, 20.0))
def test_backends_bit_identical(nx, ny, nz, seed, sigma):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(nx, ny, nz))
    labels = rng.integers(0, 4, size=(nx, ny, nz)).astype(np.uint8)
    coords = rng.uniform(-2, max(nx, ny, nz) + 1, size=(3, 64))
    res = {}
    for b in ("cython", "python"):
        with kernels.use_backend(b):
            res[b] = (
                kernels.sample_linear(data, coords, -3.0),
                kernels.sample_nearest(labels, coords, 0),
                kernels.gaussian_smooth(data, sigma),
            )
    for a, b in zip(res["cython"], res["python"]):
        assert np.array_equal(a, b)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
