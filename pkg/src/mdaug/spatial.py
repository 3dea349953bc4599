"""Geometric augmentation through one composed coordinate map.

An output voxel ``o`` of the patch reads the source at::

    crop_centre + R @ ((o - patch_centre) / scale) + elastic(o)

and is then optionally mirrored. The image is sampled once, trilinearly (an
exact bilinear when the z coordinate is integral, as in 2D and in-plane mode);
masks use nearest neighbour through the same map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .volumes import SegmentationMask, Volume, check_aligned

AXES = ("x", "y", "z")


def _interval(value, name):
    lo, hi = (float(v) for v in value)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"{name}: invalid interval ({lo}, {hi})")
    return (lo, hi)


def _probability(value, name):
    p = float(value)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class SpatialParams:
    rotation_range_deg: Tuple[float, float] = (0.0, 0.0)
    scale_range: Tuple[float, float] = (1.0, 1.0)
    p_per_axis_scale: float = 0.0
    elastic_alpha_range: Tuple[float, float] = (0.0, 0.0)
    elastic_sigma_range: Tuple[float, float] = (9.0, 13.0)
    flip_axes: Tuple[str, ...] = ()
    patch_size: Optional[Tuple[int, int, int]] = None
    p_rotation: float = 0.0
    p_scale: float = 0.0
    p_elastic: float = 0.0
    p_flip: float = 0.5
    anisotropy_threshold: float = 3.0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("rotation_range_deg", _interval(self.rotation_range_deg, "rotation_range_deg"))
        set_("scale_range", _interval(self.scale_range, "scale_range"))
        if self.scale_range[0] <= 0:
            raise ValueError("scale_range must be positive")
        set_("elastic_alpha_range", _interval(self.elastic_alpha_range, "elastic_alpha_range"))
        set_("elastic_sigma_range", _interval(self.elastic_sigma_range, "elastic_sigma_range"))
        if self.elastic_alpha_range[0] < 0 or self.elastic_sigma_range[0] <= 0:
            raise ValueError("elastic alpha must be >= 0 and sigma > 0")
        for name in ("p_per_axis_scale", "p_rotation", "p_scale", "p_elastic", "p_flip"):
            set_(name, _probability(getattr(self, name), name))
        flips = tuple(self.flip_axes)
        if not set(flips) <= set(AXES) or len(set(flips)) != len(flips):
            raise ValueError(f"flip_axes must be distinct members of {AXES}, got {flips}")
        set_("flip_axes", flips)
        if self.patch_size is not None:
            ps = tuple(int(p) for p in self.patch_size)
            if len(ps) == 2:
                ps = ps + (1,)
            if len(ps) != 3 or min(ps) < 1:
                raise ValueError(f"patch_size must have 3 entries >= 1, got {self.patch_size}")
            set_("patch_size", ps)
        if self.anisotropy_threshold <= 0:
            raise ValueError("anisotropy_threshold must be positive")


@dataclass(frozen=True)
class DisplacementField:
    """Voxel-unit offsets, shape ``(3, px, py, pz)``."""

    offsets: np.ndarray
    alpha: float
    sigma: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.offsets))) if self.offsets.size else 0.0


@dataclass(frozen=True)
class SpatialTransform:
    """A fully resolved draw of :class:`SpatialParams` for one sample."""

    patch_size: Tuple[int, int, int]
    crop_centre: Tuple[float, float, float]
    angles_deg: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    scales: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    flips: Tuple[bool, bool, bool] = (False, False, False)
    field: Optional[DisplacementField] = None

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.angles_deg)

    def is_identity_map(self) -> bool:
        return (
            not any(self.angles_deg)
            and all(s == 1.0 for s in self.scales)
            and (self.field is None or self.field.alpha == 0)
        )


def identity_transform(dims, patch_size=None) -> SpatialTransform:
    patch = tuple(dims) if patch_size is None else tuple(patch_size)
    return SpatialTransform(patch, tuple((d - 1) / 2.0 for d in dims))


def _cos_sin(deg: float):
    # exact values at multiples of 90 degrees keep quarter turns lossless
    q, r = divmod(float(deg), 90.0)
    if r == 0.0:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(q) % 4]
    t = np.deg2rad(deg)
    return float(np.cos(t)), float(np.sin(t))


def rotation_matrix(angles_deg) -> np.ndarray:
    """``Rz @ Ry @ Rx`` for rotations about the x, y and z axes (degrees)."""
    (cx, sx), (cy, sy), (cz, sz) = (_cos_sin(a) for a in angles_deg)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=np.float64)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=np.float64)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=np.float64)
    return rz @ ry @ rx


def is_in_plane(dims, spacing, threshold: float = 3.0) -> bool:
    """2D inputs, and stacks whose slice spacing exceeds ``threshold`` times the in-plane spacing."""
    if dims[2] == 1:
        return True
    return spacing[2] / min(spacing[0], spacing[1]) > threshold


def make_elastic_field(alpha: float, sigma: float, dims, rng: np.random.Generator,
                       in_plane: bool = False) -> DisplacementField:
    """Gaussian-smoothed ``U(-1, 1)`` noise scaled by ``alpha``, independent per axis.

    In-plane fields have no z component and are smoothed only within slices.
    """
    if alpha < 0 or sigma <= 0:
        raise ValueError("alpha must be >= 0 and sigma > 0")
    dims = tuple(int(d) for d in dims)
    offsets = np.zeros((3,) + dims, dtype=np.float64)
    n_axes = 2 if in_plane else 3
    smooth_axes = (0, 1) if in_plane else (0, 1, 2)
    for ax in range(n_axes):
        noise = rng.uniform(-1.0, 1.0, size=dims)
        if alpha > 0:
            offsets[ax] = kernels.gaussian_smooth(noise, sigma, smooth_axes) * alpha
    return DisplacementField(offsets, float(alpha), float(sigma))


def sample_spatial(params: SpatialParams, rng: np.random.Generator, dims,
                   spacing=(1.0, 1.0, 1.0)) -> SpatialTransform:
    """Draw one transform. Every gate and value is drawn unconditionally, in a
    fixed order, so one sub-transform's activation never shifts another's draws."""
    dims = tuple(int(d) for d in dims)
    patch = params.patch_size or dims
    in_plane = is_in_plane(dims, spacing, params.anisotropy_threshold)

    crop = []
    for d, p, u in zip(dims, patch, rng.random(3)):
        if d > p:
            start = int(np.floor(u * (d - p + 1)))
            crop.append(min(start, d - p) + (p - 1) / 2.0)
        else:
            crop.append((d - 1) / 2.0)

    lo, hi = params.rotation_range_deg
    gate_rot = rng.random() < params.p_rotation
    angles = rng.uniform(lo, hi, size=3)
    if not gate_rot:
        angles = (0.0, 0.0, 0.0)
    elif in_plane:
        angles = (0.0, 0.0, float(angles[2]))
    else:
        angles = tuple(float(a) for a in angles)

    lo, hi = params.scale_range
    gate_scale = rng.random() < params.p_scale
    per_axis = rng.random() < params.p_per_axis_scale
    draws = rng.uniform(lo, hi, size=3)
    if not gate_scale:
        scales = [1.0, 1.0, 1.0]
    elif per_axis:
        scales = [float(s) for s in draws]
    else:
        scales = [float(draws[0])] * 3
    if in_plane:
        scales[2] = 1.0

    gate_el = rng.random() < params.p_elastic
    alpha = float(rng.uniform(*params.elastic_alpha_range))
    sigma = float(rng.uniform(*params.elastic_sigma_range))
    field_seed = int(rng.integers(0, 2**63 - 1))
    field = None
    if gate_el and alpha > 0:
        field = make_elastic_field(alpha, sigma, patch, np.random.default_rng(field_seed), in_plane)

    flip_draws = rng.random(3) < params.p_flip
    flips = tuple(bool(f) and a in params.flip_axes for f, a in zip(flip_draws, AXES))
    if dims[2] == 1:
        flips = (flips[0], flips[1], False)

    return SpatialTransform(
        patch_size=tuple(patch),
        crop_centre=tuple(crop),
        angles_deg=tuple(angles),
        scales=tuple(scales),
        flips=flips,
        field=field,
    )


def source_coordinates(t: SpatialTransform) -> np.ndarray:
    """Source index for every patch voxel, shape ``(3, px*py*pz)`` in C order."""
    patch = t.patch_size
    grid = np.indices(patch, dtype=np.float64).reshape(3, -1)
    centre = np.array([(p - 1) / 2.0 for p in patch])[:, None]
    local = (grid - centre) / np.asarray(t.scales, dtype=np.float64)[:, None]
    if any(t.angles_deg):
        local = t.rotation @ local
    src = local + np.asarray(t.crop_centre, dtype=np.float64)[:, None]
    if t.field is not None:
        src = src + t.field.offsets.reshape(3, -1)
    return src


def _flip(arr: np.ndarray, flips) -> np.ndarray:
    axes = tuple(i for i, f in enumerate(flips) if f)
    return np.flip(arr, axis=axes) if axes else arr


def apply_spatial(v: Volume, m: Optional[SegmentationMask], t: SpatialTransform):
    """Resample ``v`` (and ``m``) into a patch through ``t``.

    Out-of-bounds reads take the volume minimum for images and background for masks.
    """
    check_aligned(v, m)
    coords = source_coordinates(t)
    fill = float(v.data.min())
    img = kernels.sample_linear(v.data, coords, fill).reshape(t.patch_size)
    out_v = v.with_data(np.ascontiguousarray(_flip(img, t.flips)))
    out_m = None
    if m is not None:
        lab = kernels.sample_nearest(m.labels, coords, 0).reshape(t.patch_size)
        out_m = m.with_labels(np.ascontiguousarray(_flip(lab, t.flips)))
    return out_v, out_m


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _resample_coords(dims, spacing, target_spacing):
    new_dims = tuple(
        max(1, _round_half_up(d * s / t)) for d, s, t in zip(dims, spacing, target_spacing)
    )
    axes = []
    for d, nd, s, t in zip(dims, new_dims, spacing, target_spacing):
        # voxel centres aligned; coordinates clamped so edges replicate
        c = (np.arange(nd, dtype=np.float64) + 0.5) * (t / s) - 0.5
        if t == s:
            c = np.arange(nd, dtype=np.float64)
        axes.append(np.clip(c, 0.0, d - 1))
    grid = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(3, -1)
    return new_dims, grid


def _check_target(target_spacing):
    ts = tuple(float(t) for t in target_spacing)
    if len(ts) != 3 or not all(np.isfinite(t) and t > 0 for t in ts):
        raise ValueError(f"target spacing must be 3 positive values, got {target_spacing}")
    return ts


def resample(v: Volume, target_spacing) -> Volume:
    """Trilinear resampling onto ``target_spacing``; dims scale by ``spacing / target``."""
    ts = _check_target(target_spacing)
    new_dims, grid = _resample_coords(v.dims, v.spacing, ts)
    data = kernels.sample_linear(v.data, grid, float(v.data.min())).reshape(new_dims)
    return Volume(data, ts, v.metadata)


def resample_mask(m: SegmentationMask, target_spacing) -> SegmentationMask:
    ts = _check_target(target_spacing)
    new_dims, grid = _resample_coords(m.dims, m.spacing, ts)
    labels = kernels.sample_nearest(m.labels, grid, 0).reshape(new_dims)
    return SegmentationMask(labels, ts, m.num_classes, m.metadata)


def z_spacing_policy(cases: Sequence, policy: str = "percentile10") -> float:
    """Target slice spacing over training cases: 10th percentile (default) or minimum.

    ``cases`` may hold volumes or bare z-spacings.
    """
    zs = [float(c.spacing[2]) if hasattr(c, "spacing") else float(c) for c in cases]
    if not zs:
        raise ValueError("z_spacing_policy needs at least one case")
    if policy == "minimum":
        return min(zs)
    if policy == "percentile10":
        return float(np.percentile(zs, 10.0, method="linear"))
    raise ValueError(f"unknown z-spacing policy {policy!r}")
