"""Backend selection for the inner loops.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy fallback in ``_pykernels`` takes over. Set ``MDAUG_BACKEND=python`` to
force the fallback. Both produce bit-identical output.
"""
from __future__ import annotations

import contextlib
import math
import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def _initial_backend() -> str:
    forced = os.environ.get("MDAUG_BACKEND", "").strip().lower()
    if forced:
        if forced not in ("python", "cython"):
            raise ImportError(f"MDAUG_BACKEND must be 'python' or 'cython', got {forced!r}")
        if forced not in _BACKENDS:
            raise ImportError("MDAUG_BACKEND=cython but the extension is not built")
        return forced
    return "cython" if "cython" in _BACKENDS else "python"


BACKEND = _initial_backend()
_impl = _BACKENDS[BACKEND]


def available_backends():
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    global BACKEND, _impl
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    BACKEND = name
    _impl = _BACKENDS[name]


@contextlib.contextmanager
def use_backend(name: str):
    previous = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def sample_linear(data: np.ndarray, coords: np.ndarray, fill: float) -> np.ndarray:
    """Trilinear interpolation of ``data`` at ``coords`` (shape ``(3, N)``).

    Corners outside the grid read ``fill``.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    return _impl.sample_linear(data, coords, float(fill))


def sample_nearest(labels: np.ndarray, coords: np.ndarray, fill: int = 0) -> np.ndarray:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    return _impl.sample_nearest(labels, coords, np.uint8(fill))


def reflect_indices(n: int, radius: int) -> np.ndarray:
    """Source index for each padded position ``-radius .. n-1+radius``.

    Half-sample symmetric extension (``d c b a | a b c d | d c b a``), repeated
    as often as the radius requires.
    """
    pos = np.arange(-radius, n + radius)
    period = 2 * n
    m = np.mod(pos, period)
    return np.where(m < n, m, period - 1 - m).astype(np.intp)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unit-mass sampled Gaussian with radius ``ceil(3 sigma)``."""
    radius = max(int(math.ceil(3.0 * sigma)), 1)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def convolve_axis(data: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """Correlate ``data`` with an odd-length 1D kernel along ``axis``, reflective boundary."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size % 2 != 1:
        raise ValueError("kernel must be 1D with odd length")
    moved = np.moveaxis(np.asarray(data, dtype=np.float64), axis, -1)
    shape = moved.shape
    rows = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
    source = reflect_indices(shape[-1], weights.size // 2)
    out = _impl.convolve_rows(rows, weights, source)
    return np.moveaxis(np.asarray(out).reshape(shape), -1, axis)


def gaussian_smooth(data: np.ndarray, sigma: float, axes=(0, 1, 2)) -> np.ndarray:
    out = np.asarray(data, dtype=np.float64)
    if sigma <= 0:
        return out.copy()
    w = gaussian_kernel(sigma)
    for ax in axes:
        out = convolve_axis(out, w, ax)
    return out
