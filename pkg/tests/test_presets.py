import json

import pytest

from mdaug.presets import (
    BUILTIN_PRESETS,
    DEFAULT_BLUR_SIGMA,
    DEFAULT_CONTRAST,
    DEFAULT_NOISE_SIGMA,
    PresetError,
    TRANSFORM_ORDER,
    load_preset,
    preset_from_dict,
)

# Rotation / gamma / inv. gamma / Gaussian / brightness / contrast per preset.
# Additive brightness is the Gaussian (mu, sigma) column; multiplicative the range column.
PRESET_ROWS = {
    "default-nnunet": dict(rot=30, gamma=(0.7, 1.5), inv=None, gauss=True, mult=None, add=(0, 0.1), contrast=False),
    "BL": dict(rot=30, gamma=None, inv=None, gauss=False, mult=None, add=None, contrast=False),
    "BL-enhanced": dict(rot=60, gamma=None, inv=None, gauss=False, mult=None, add=None, contrast=False),
    "BL-enhanced-br": dict(rot=60, gamma=None, inv=None, gauss=False, mult=(0.6, 1.5), add=(0, 0.2), contrast=False),
    "BL-all": dict(rot=30, gamma=(0.7, 1.5), inv=(0.7, 1.5), gauss=True, mult=(0.7, 1.3), add=(0, 0.1), contrast=True),
    "heavy-DA": dict(rot=180, gamma=(0.6, 1.6), inv=(0.6, 1.6), gauss=True, mult=(0.7, 1.3), add=(0, 0.3), contrast=True),
}


@pytest.mark.parametrize("name,row", PRESET_ROWS.items())
def test_preset_rows(name, row):
    p = load_preset(name)
    assert p.spatial.rotation_range_deg == (-row["rot"], row["rot"])
    assert p.intensity.gamma_range == row["gamma"]
    assert p.intensity.inverse_gamma_range == row["inv"]
    gauss = (p.intensity.gaussian_noise_sigma_range, p.intensity.gaussian_blur_sigma_range)
    assert gauss == ((DEFAULT_NOISE_SIGMA, DEFAULT_BLUR_SIGMA) if row["gauss"] else (None, None))
    assert p.intensity.multiplicative_brightness_range == row["mult"]
    assert p.intensity.additive_brightness == row["add"]
    assert p.intensity.contrast_range == (DEFAULT_CONTRAST if row["contrast"] else None)
    assert p.spatial.flip_axes == ("x", "y")


def test_bl_family_scale_range():
    for name in ("BL", "BL-enhanced", "BL-enhanced-br", "BL-all", "heavy-DA"):
        assert load_preset(name).spatial.scale_range == (0.7, 1.4)


def test_nnunet_presets_side_by_side():
    d, m = load_preset("default-nnunet"), load_preset("mnms-nnunet")
    assert (d.spatial.p_rotation, m.spatial.p_rotation) == (0.2, 0.7)
    assert (d.spatial.p_elastic, m.spatial.p_elastic) == (0.0, 0.1)
    assert (d.spatial.p_per_axis_scale, m.spatial.p_per_axis_scale) == (0.0, 0.3)
    assert (d.spatial.elastic_alpha_range, m.spatial.elastic_alpha_range) == ((0, 200), (0, 300))
    assert (d.spatial.elastic_sigma_range, m.spatial.elastic_sigma_range) == ((9, 13), (9, 15))
    assert (d.spatial.p_scale, m.spatial.p_scale) == (0.2, 0.3)
    assert (d.intensity.gamma_range, m.intensity.gamma_range) == ((0.7, 1.5), (0.5, 1.6))
    assert m.intensity.additive_brightness == (0.0, 0.2)
    assert d.intensity.p_gamma == 0.3


@pytest.mark.parametrize("name", list(BUILTIN_PRESETS))
def test_json_round_trip_lossless(name):
    p = BUILTIN_PRESETS[name]
    assert preset_from_dict(json.loads(p.to_json())) == p


def test_aliases_and_files(tmp_path):
    assert load_preset("BL+all") is BUILTIN_PRESETS["BL-all"]
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"schema": "mdaug-preset/1", "name": "mine", "base": "BL",
                                "spatial": {"patch_size": [64, 64, 1]}}))
    p = load_preset(str(path))
    assert p.name == "mine" and p.spatial.patch_size == (64, 64, 1)
    assert p.spatial.rotation_range_deg == (-30, 30)
    assert p.order == TRANSFORM_ORDER


@pytest.mark.parametrize("doc,match", [
    ({"spatial": {"rotation": 5}}, "unknown keys"),
    ({"bogus": 1}, "unknown keys"),
    ({"spatial": {"scale_range": [1.4, 0.7]}}, "invalid interval"),
    ({"intensity": {"gamma_range": [1.5, 0.7]}}, "invalid interval"),
    ({"schema": "mdaug-preset/2"}, "schema"),
    ({"order": ["noise", "spatial"]}, "order"),
    ({"spatial": [1, 2]}, "object"),
])
def test_schema_violations(doc, match):
    with pytest.raises(PresetError, match=match):
        preset_from_dict(doc)


def test_unknown_preset():
    with pytest.raises(PresetError, match="unknown preset"):
        load_preset("extreme-DA")
