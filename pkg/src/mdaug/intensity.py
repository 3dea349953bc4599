"""Photometric augmentations on z-scored intensities.

Each transform takes its already-drawn parameter; :func:`sample_intensity`
resolves the random draws for one sample.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .spatial import _interval, _probability, is_in_plane
from .volumes import Volume

GAMMA_EPS = 1e-7


@dataclass(frozen=True)
class IntensityParams:
    gamma_range: Optional[Tuple[float, float]] = None
    inverse_gamma_range: Optional[Tuple[float, float]] = None
    p_gamma: float = 0.3
    gamma_retain_stats: bool = False
    additive_brightness: Optional[Tuple[float, float]] = None  # (mu, sigma)
    p_additive_brightness: float = 0.15
    multiplicative_brightness_range: Optional[Tuple[float, float]] = None
    p_multiplicative_brightness: float = 0.15
    contrast_range: Optional[Tuple[float, float]] = None
    p_contrast: float = 0.15
    contrast_preserve_range: bool = True
    gaussian_noise_sigma_range: Optional[Tuple[float, float]] = None
    p_gaussian_noise: float = 0.1
    gaussian_blur_sigma_range: Optional[Tuple[float, float]] = None
    p_gaussian_blur: float = 0.2
    anisotropy_threshold: float = 3.0

    def __post_init__(self):
        for name in ("gamma_range", "inverse_gamma_range", "multiplicative_brightness_range",
                     "contrast_range", "gaussian_noise_sigma_range", "gaussian_blur_sigma_range"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _interval(val, name))
        for name in ("gamma_range", "inverse_gamma_range"):
            val = getattr(self, name)
            if val is not None and val[0] <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gaussian_noise_sigma_range", "gaussian_blur_sigma_range"):
            val = getattr(self, name)
            if val is not None and val[0] < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.additive_brightness is not None:
            mu, sigma = (float(x) for x in self.additive_brightness)
            if not (np.isfinite(mu) and np.isfinite(sigma)) or sigma < 0:
                raise ValueError("additive_brightness needs finite mu and sigma >= 0")
            object.__setattr__(self, "additive_brightness", (mu, sigma))
        for name in ("p_gamma", "p_additive_brightness", "p_multiplicative_brightness",
                     "p_contrast", "p_gaussian_noise", "p_gaussian_blur"):
            object.__setattr__(self, name, _probability(getattr(self, name), name))


def gamma_transform(v: Volume, gamma: float, retain_stats: bool = False) -> Volume:
    """``((x - min) / (range + eps)) ** gamma * range + min``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = v.data
    lo, hi = float(x.min()), float(x.max())
    rng = hi - lo
    if rng == 0 or gamma == 1.0:
        return v
    mean, sd = x.mean(), x.std()
    y = np.power((x - lo) / (rng + GAMMA_EPS), gamma) * rng + lo
    if retain_stats:
        y = (y - y.mean()) / (y.std() + 1e-8) * sd + mean
    return v.with_data(y)


def inverse_gamma_transform(v: Volume, gamma: float, retain_stats: bool = False) -> Volume:
    """Gamma applied to the negated image: bends the dark end instead of the bright one."""
    neg = v.with_data(-v.data)
    return v.with_data(-gamma_transform(neg, gamma, retain_stats).data)


def additive_brightness(v: Volume, offset: float) -> Volume:
    if offset == 0:
        return v
    return v.with_data(v.data + offset)


def multiplicative_brightness(v: Volume, factor: float) -> Volume:
    if factor == 1:
        return v
    return v.with_data(v.data * factor)


def contrast_transform(v: Volume, factor: float, preserve_range: bool = True) -> Volume:
    if factor == 1:
        return v
    x = v.data
    mean = x.mean()
    y = (x - mean) * factor + mean
    if preserve_range:
        y = np.clip(y, x.min(), x.max())
    return v.with_data(y)


def gaussian_noise(v: Volume, sigma: float, rng: np.random.Generator) -> Volume:
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if sigma == 0:
        return v
    return v.with_data(v.data + rng.normal(0.0, sigma, size=v.data.shape))


def gaussian_blur(v: Volume, sigma: float, anisotropy_threshold: float = 3.0) -> Volume:
    """Separable unit-mass Gaussian, radius ``ceil(3 sigma)``, reflective edges.

    Anisotropic stacks are blurred within slices only.
    """
    if sigma < 0:
        raise ValueError("blur sigma must be >= 0")
    if sigma == 0:
        return v
    axes = (0, 1) if is_in_plane(v.dims, v.spacing, anisotropy_threshold) else (0, 1, 2)
    return v.with_data(kernels.gaussian_smooth(v.data, sigma, axes))


@dataclass(frozen=True)
class IntensityDraw:
    """Resolved intensity parameters for one sample; ``None`` means skipped."""

    gamma: Optional[float] = None
    inverse: bool = False
    additive: Optional[float] = None
    multiplicative: Optional[float] = None
    contrast: Optional[float] = None
    blur_sigma: Optional[float] = None
    noise_sigma: Optional[float] = None
    noise_seed: int = 0


def sample_intensity(params: IntensityParams, rng: np.random.Generator) -> IntensityDraw:
    """Draw gates and values in a fixed order regardless of which transforms fire."""
    u = rng.random(7)
    vals = rng.random(6)
    z = float(rng.standard_normal())
    noise_seed = int(rng.integers(0, 2**63 - 1))

    def lerp(rng_, t):
        return rng_[0] + (rng_[1] - rng_[0]) * t

    gamma, inverse = None, False
    gr, igr = params.gamma_range, params.inverse_gamma_range
    if (gr or igr) and u[0] < params.p_gamma:
        inverse = igr is not None and (gr is None or u[1] < 0.5)
        gamma = float(lerp(igr if inverse else gr, vals[0]))

    additive = None
    if params.additive_brightness is not None and u[2] < params.p_additive_brightness:
        mu, sigma = params.additive_brightness
        additive = mu + sigma * z
    mult = None
    if params.multiplicative_brightness_range and u[3] < params.p_multiplicative_brightness:
        mult = float(lerp(params.multiplicative_brightness_range, vals[2]))
    contrast = None
    if params.contrast_range and u[4] < params.p_contrast:
        contrast = float(lerp(params.contrast_range, vals[3]))
    blur = None
    if params.gaussian_blur_sigma_range and u[5] < params.p_gaussian_blur:
        blur = float(lerp(params.gaussian_blur_sigma_range, vals[4]))
    noise = None
    if params.gaussian_noise_sigma_range and u[6] < params.p_gaussian_noise:
        noise = float(lerp(params.gaussian_noise_sigma_range, vals[5]))
    return IntensityDraw(gamma, inverse, additive, mult, contrast, blur, noise, noise_seed)


def apply_intensity(v: Volume, draw: IntensityDraw, params: IntensityParams,
                    timings: Optional[dict] = None) -> Volume:
    """Fixed order: gamma -> brightness -> contrast -> blur -> noise."""
    def tick(name, t0):
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0

    t0 = time.perf_counter()
    if draw.gamma is not None:
        fn = inverse_gamma_transform if draw.inverse else gamma_transform
        v = fn(v, draw.gamma, params.gamma_retain_stats)
    tick("gamma", t0)
    t0 = time.perf_counter()
    if draw.additive is not None:
        v = additive_brightness(v, draw.additive)
    if draw.multiplicative is not None:
        v = multiplicative_brightness(v, draw.multiplicative)
    tick("brightness", t0)
    t0 = time.perf_counter()
    if draw.contrast is not None:
        v = contrast_transform(v, draw.contrast, params.contrast_preserve_range)
    tick("contrast", t0)
    t0 = time.perf_counter()
    if draw.blur_sigma is not None:
        v = gaussian_blur(v, draw.blur_sigma, params.anisotropy_threshold)
    tick("blur", t0)
    t0 = time.perf_counter()
    if draw.noise_sigma is not None:
        v = gaussian_noise(v, draw.noise_sigma, np.random.default_rng(draw.noise_seed))
    tick("noise", t0)
    return v
