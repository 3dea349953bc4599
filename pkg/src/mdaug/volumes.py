"""Volume, label and probability containers shared by every other module.

All grids are indexed ``(x, y, z)``; 2D images are stored with ``nz == 1``.
Containers are immutable: arrays are copied on construction and flagged
read-only, so they can be handed to worker processes without defensive copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

CLASS_NAMES = {0: "background", 1: "LV", 2: "LVM", 3: "RV"}
FOREGROUND = (1, 2, 3)

# Which acquisition centres each vendor appears at.
VENDOR_CENTRES = {"A": (1, 6), "B": (2, 3), "C": (4,), "D": (5,)}
FRAMES = ("ED", "ES")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _as_grid(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2D or 3D grid, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"all dims must be >= 1, got {arr.shape}")
    return arr


def _check_spacing(spacing, ndim=3) -> Tuple[float, ...]:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != ndim:
        raise ValueError(f"spacing needs {ndim} components, got {len(sp)}")
    if not all(np.isfinite(s) and s > 0 for s in sp):
        raise ValueError(f"spacing must be positive and finite, got {sp}")
    return sp


@dataclass(frozen=True)
class Volume:
    """Scalar intensity grid with per-axis spacing in millimetres."""

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        arr = _as_grid(self.data).astype(np.float64, copy=False)
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume contains non-finite values")
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def is_2d(self) -> bool:
        return self.data.shape[2] == 1

    def with_data(self, data, spacing=None) -> "Volume":
        return Volume(data, self.spacing if spacing is None else spacing, self.metadata)

    def __reduce__(self):
        return (Volume, (np.array(self.data), self.spacing, dict(self.metadata)))


@dataclass(frozen=True)
class SegmentationMask:
    """Integer label grid; every voxel must be a code in ``0 .. num_classes-1``."""

    labels: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    num_classes: int = len(CLASS_NAMES)
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        arr = _as_grid(self.labels)
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("mask labels must be integral")
        elif arr.dtype.kind not in "iub":
            raise ValueError(f"unsupported mask dtype {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() >= self.num_classes):
            raise ValueError(
                f"mask labels must lie in [0, {self.num_classes - 1}], "
                f"found range [{arr.min()}, {arr.max()}]"
            )
        object.__setattr__(self, "labels", _frozen(arr.astype(np.uint8)))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.labels.shape)

    def with_labels(self, labels, spacing=None) -> "SegmentationMask":
        return SegmentationMask(
            labels, self.spacing if spacing is None else spacing, self.num_classes, self.metadata
        )

    def __reduce__(self):
        return (
            SegmentationMask,
            (np.array(self.labels), self.spacing, self.num_classes, dict(self.metadata)),
        )


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-class soft prediction, shape ``(C, nx, ny, nz)``.

    Each voxel's class probabilities must sum to one within ``1e-5``.
    """

    probs: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[..., None]
        if arr.ndim != 4 or arr.shape[0] < 2:
            raise ValueError(f"expected (C>=2, x, y, z) probabilities, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < -1e-12 or arr.max() > 1 + 1e-12:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.max(np.abs(arr.sum(axis=0) - 1.0)) > 1e-5:
            raise ValueError("per-voxel class probabilities must sum to 1")
        object.__setattr__(self, "probs", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[0])

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.probs.shape[1:])


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    vendor: str
    centre: int
    annotated: bool = True
    frames: Tuple[str, ...] = FRAMES

    def __post_init__(self):
        if self.vendor not in VENDOR_CENTRES:
            raise ValueError(f"unknown vendor {self.vendor!r}")
        if self.centre not in VENDOR_CENTRES[self.vendor]:
            raise ValueError(
                f"vendor {self.vendor} was not acquired at centre {self.centre}"
            )
        frames = tuple(self.frames)
        if not set(frames) <= set(FRAMES):
            raise ValueError(f"frames must be drawn from {FRAMES}, got {frames}")
        object.__setattr__(self, "frames", frames)


def zscore_normalize(v: Volume) -> Volume:
    """Zero-mean, unit-variance (population) rescaling; constant input maps to zeros."""
    x = v.data
    # constancy is tested directly: the std of a constant array can come out as
    # a rounding residue instead of 0
    if x.size == 0 or x.max() == x.min():
        return v.with_data(np.zeros_like(x))
    # the result is scale invariant; rescaling first keeps subnormal or huge
    # inputs from under/overflowing in the variance
    y = x / np.max(np.abs(x))
    return v.with_data((y - y.mean()) / y.std())


def argmax_decode(p: ProbabilityMap) -> SegmentationMask:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties.
    labels = np.argmax(p.probs, axis=0)
    return SegmentationMask(labels, p.spacing, num_classes=max(p.num_classes, 2))


def one_hot(m: SegmentationMask, num_classes: int) -> ProbabilityMap:
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if m.labels.size and int(m.labels.max()) >= num_classes:
        raise ValueError(
            f"label {int(m.labels.max())} out of range for {num_classes} classes"
        )
    probs = np.zeros((num_classes,) + m.dims, dtype=np.float64)
    np.put_along_axis(probs, m.labels[None].astype(np.intp), 1.0, axis=0)
    return ProbabilityMap(probs, m.spacing)


def check_aligned(v: Optional[Volume], m: Optional[SegmentationMask]) -> None:
    if v is not None and m is not None and v.dims != m.dims:
        raise ValueError(f"volume dims {v.dims} do not match mask dims {m.dims}")
