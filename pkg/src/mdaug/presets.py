"""Named augmentation presets and their JSON config format (``mdaug-preset/1``).

Brightness columns follow one reading throughout: additive brightness is a
Gaussian offset ``(mu, sigma)`` and multiplicative brightness a uniform factor
range. Where the source tables only say a transform is on, the ranges come
from ``DEFAULT_NOISE_SIGMA``, ``DEFAULT_BLUR_SIGMA`` and ``DEFAULT_CONTRAST``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

from .intensity import IntensityParams
from .spatial import SpatialParams

SCHEMA = "mdaug-preset/1"
TRANSFORM_ORDER = ("spatial", "gamma", "brightness", "contrast", "blur", "noise")

DEFAULT_NOISE_SIGMA = (0.0, 0.1)
DEFAULT_BLUR_SIGMA = (0.5, 1.0)
DEFAULT_CONTRAST = (0.75, 1.25)


class PresetError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentationPreset:
    name: str
    spatial: SpatialParams = field(default_factory=SpatialParams)
    intensity: IntensityParams = field(default_factory=IntensityParams)
    order: tuple = TRANSFORM_ORDER

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "spatial": _jsonable(dataclasses.asdict(self.spatial)),
            "intensity": _jsonable(dataclasses.asdict(self.intensity)),
            "order": list(self.order),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _gaussian(on: bool) -> dict:
    if not on:
        return {}
    return {"gaussian_noise_sigma_range": DEFAULT_NOISE_SIGMA,
            "gaussian_blur_sigma_range": DEFAULT_BLUR_SIGMA}


def _bl_spatial(rotation: float) -> SpatialParams:
    return SpatialParams(
        rotation_range_deg=(-rotation, rotation),
        scale_range=(0.7, 1.4),
        flip_axes=("x", "y"),
        p_rotation=0.2,
        p_scale=0.2,
    )


def _builtin() -> dict:
    presets = {}

    presets["identity"] = AugmentationPreset("identity", SpatialParams(), IntensityParams())

    presets["default-nnunet"] = AugmentationPreset(
        "default-nnunet",
        SpatialParams(
            rotation_range_deg=(-30.0, 30.0),
            scale_range=(0.85, 1.25),
            elastic_alpha_range=(0.0, 200.0),
            elastic_sigma_range=(9.0, 13.0),
            flip_axes=("x", "y"),
            p_rotation=0.2,
            p_scale=0.2,
            p_elastic=0.0,
            p_per_axis_scale=0.0,
        ),
        IntensityParams(gamma_range=(0.7, 1.5), additive_brightness=(0.0, 0.1), **_gaussian(True)),
    )

    presets["BL"] = AugmentationPreset("BL", _bl_spatial(30.0), IntensityParams())
    presets["BL-enhanced"] = AugmentationPreset("BL-enhanced", _bl_spatial(60.0), IntensityParams())
    presets["BL-enhanced-br"] = AugmentationPreset(
        "BL-enhanced-br",
        _bl_spatial(60.0),
        IntensityParams(multiplicative_brightness_range=(0.6, 1.5), additive_brightness=(0.0, 0.2)),
    )
    presets["BL-all"] = AugmentationPreset(
        "BL-all",
        _bl_spatial(30.0),
        IntensityParams(
            gamma_range=(0.7, 1.5),
            inverse_gamma_range=(0.7, 1.5),
            multiplicative_brightness_range=(0.7, 1.3),
            additive_brightness=(0.0, 0.1),
            contrast_range=DEFAULT_CONTRAST,
            **_gaussian(True),
        ),
    )
    presets["heavy-DA"] = AugmentationPreset(
        "heavy-DA",
        _bl_spatial(180.0),
        IntensityParams(
            gamma_range=(0.6, 1.6),
            inverse_gamma_range=(0.6, 1.6),
            multiplicative_brightness_range=(0.7, 1.3),
            additive_brightness=(0.0, 0.3),
            contrast_range=DEFAULT_CONTRAST,
            **_gaussian(True),
        ),
    )

    base = presets["default-nnunet"]
    presets["mnms-nnunet"] = AugmentationPreset(
        "mnms-nnunet",
        dataclasses.replace(
            base.spatial,
            p_rotation=0.7,
            p_elastic=0.1,
            elastic_alpha_range=(0.0, 300.0),
            elastic_sigma_range=(9.0, 15.0),
            p_per_axis_scale=0.3,
            p_scale=0.3,
        ),
        dataclasses.replace(base.intensity, gamma_range=(0.5, 1.6), additive_brightness=(0.0, 0.2)),
    )
    return presets


BUILTIN_PRESETS = _builtin()
# aliases matching the table labels
_ALIASES = {"BL+all": "BL-all", "BL-enhanced+br": "BL-enhanced-br", "heavy DA": "heavy-DA",
            "default nnU-Net": "default-nnunet", "mnms nnU-Net": "mnms-nnunet"}


def preset_names():
    return tuple(BUILTIN_PRESETS)


def _build(cls, doc, where):
    if not isinstance(doc, Mapping):
        raise PresetError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise PresetError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise PresetError(f"{where}: {exc}") from exc


def preset_from_dict(doc: Mapping) -> AugmentationPreset:
    if not isinstance(doc, Mapping):
        raise PresetError("preset document must be a JSON object")
    unknown = set(doc) - {"schema", "name", "spatial", "intensity", "order", "base"}
    if unknown:
        raise PresetError(f"unknown keys in preset: {sorted(unknown)}")
    if doc.get("schema", SCHEMA) != SCHEMA:
        raise PresetError(f"unsupported preset schema {doc.get('schema')!r}")
    order = tuple(doc.get("order", TRANSFORM_ORDER))
    if order != TRANSFORM_ORDER:
        raise PresetError(f"transform order is fixed to {list(TRANSFORM_ORDER)}")
    spatial, intensity = {}, {}
    if "base" in doc:
        base = _lookup(doc["base"])
        spatial = _jsonable(dataclasses.asdict(base.spatial))
        intensity = _jsonable(dataclasses.asdict(base.intensity))
    for key, target in (("spatial", spatial), ("intensity", intensity)):
        part = doc.get(key, {})
        if not isinstance(part, Mapping):
            raise PresetError(f"{key} must be an object")
        target.update(part)
    name = doc.get("name", "custom")
    if not isinstance(name, str):
        raise PresetError("preset name must be a string")
    return AugmentationPreset(
        name,
        _build(SpatialParams, spatial, "spatial"),
        _build(IntensityParams, intensity, "intensity"),
    )


def _lookup(name: str) -> AugmentationPreset:
    key = _ALIASES.get(name, name)
    if key not in BUILTIN_PRESETS:
        raise PresetError(f"unknown preset {name!r}; built-ins: {', '.join(BUILTIN_PRESETS)}")
    return BUILTIN_PRESETS[key]


def load_preset(ref: Union[str, Path, Mapping, AugmentationPreset]) -> AugmentationPreset:
    """Resolve a built-in name, a JSON file path, or an already-parsed document."""
    if isinstance(ref, AugmentationPreset):
        return ref
    if isinstance(ref, Mapping):
        return preset_from_dict(ref)
    key = str(ref)
    if _ALIASES.get(key, key) in BUILTIN_PRESETS:
        return _lookup(key)
    path = Path(key)
    if path.suffix == ".json" and path.is_file():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PresetError(f"{path}: invalid JSON ({exc})") from exc
        return preset_from_dict(doc)
    return _lookup(key)
