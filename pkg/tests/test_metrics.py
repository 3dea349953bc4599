import json

import numpy as np
import pytest

from mdaug.metrics import (
    CaseScore,
    dice,
    ensemble,
    format_vendor_table,
    mean_dice,
    report_from_dict,
    score_case,
    stratified_report,
)
from mdaug.volumes import ProbabilityMap, SegmentationMask, argmax_decode


def dice_oracle(p, g, c):
    # set-based count over voxel coordinates
    ps = {i for i in np.ndindex(p.shape) if p[i] == c}
    gs = {i for i in np.ndindex(g.shape) if g[i] == c}
    if not ps and not gs:
        return 1.0
    return 2 * len(ps & gs) / (len(ps) + len(gs))


def test_hand_fixture():
    p = np.zeros((4, 4), np.uint8)
    g = np.zeros((4, 4), np.uint8)
    p[0, :4] = 1
    g[0, :2] = 1
    assert dice(p, g, 1) == pytest.approx(0.6667, abs=1e-4)
    assert dice(p, g, 1) == dice(g, p, 1)


def test_conventions():
    z = np.zeros((3, 3), np.uint8)
    assert dice(z, z, 2) == 1.0
    assert np.isnan(dice(z, z, 2, empty_value=float("nan")))
    with pytest.raises(ValueError, match="shape"):
        dice(z, np.zeros((3, 4)), 1)


def test_random_pairs_match_oracle():
    rng = np.random.default_rng(8)
    for _ in range(200):
        p = rng.integers(0, 4, size=(8, 8, 8))
        g = rng.integers(0, 4, size=(8, 8, 8))
        for c in (1, 2, 3):
            assert dice(p, g, c) == dice_oracle(p, g, c)


def test_score_case_on_masks():
    labels = np.arange(4, dtype=np.uint8).reshape(2, 2, 1)
    m = SegmentationMask(labels, (1, 1, 1))
    assert score_case(m, m) == {"LV": 1.0, "LVM": 1.0, "RV": 1.0}


def test_mean_dice_vendor_a():
    assert round(mean_dice({"LV": 0.9232, "LVM": 0.8571, "RV": 0.8870}), 4) == 0.8891
    with pytest.raises(KeyError):
        mean_dice({"LV": 1.0})


def _fixture_cases():
    # each vendor's three patients average exactly to the target column
    cols = {"A": (0.9232, 0.8571, 0.8870), "B": (0.9146, 0.8761, 0.8876),
            "C": (0.9032, 0.8418, 0.8838), "D": (0.9091, 0.8384, 0.8822)}
    cases = []
    for v, (lv, lvm, rv) in cols.items():
        for i, d in enumerate((-0.01, 0.0, 0.01)):
            cases.append(CaseScore(f"{v}{i}", v, {"LV": lv + d, "LVM": lvm - d, "RV": rv}))
    return cases


def test_vendor_table_layout():
    report = stratified_report(_fixture_cases())
    text = report.to_text()
    lines = text.splitlines()
    assert lines[0].split() == ["Vendor", "A", "Vendor", "B", "Vendor", "C", "Vendor", "D"]
    assert lines[1].split()[:2] == ["LV", "0.9232"]
    assert lines[2].split()[:2] == ["LVM", "0.8571"]
    assert lines[3].split()[:2] == ["RV", "0.8870"]
    assert lines[3].split()[-1] == "0.8822"
    assert report.counts == {"A": 3, "B": 3, "C": 3, "D": 3}


def test_two_vendor_hand_fixture():
    cases = [
        CaseScore("a1", "A", {"LV": 1.0, "LVM": 0.5, "RV": 0.0}),
        CaseScore("a2", "A", {"LV": 0.0, "LVM": 0.5, "RV": 1.0}),
        CaseScore("b1", "B", {"LV": 0.8, "LVM": 0.6, "RV": 0.4}),
        CaseScore("b2", "B", {"LV": 0.6, "LVM": 0.4, "RV": 0.2}),
    ]
    r = stratified_report(cases)
    assert r.per_vendor["A"] == {"LV": 0.5, "LVM": 0.5, "RV": 0.5}
    assert r.per_vendor["B"] == pytest.approx({"LV": 0.7, "LVM": 0.5, "RV": 0.3})


def test_patient_averaging_over_frames():
    cases = [
        CaseScore("p1", "A", {"LV": 1.0, "LVM": 1.0, "RV": 1.0}, "ED"),
        CaseScore("p1", "A", {"LV": 0.0, "LVM": 0.0, "RV": 0.0}, "ES"),
        CaseScore("p2", "A", {"LV": 1.0, "LVM": 1.0, "RV": 1.0}, "ED"),
    ]
    r = stratified_report(cases)
    assert r.per_vendor["A"]["LV"] == pytest.approx(2 / 3)
    assert r.per_vendor_patient["A"]["LV"] == pytest.approx(0.75)


def test_report_json_round_trip():
    r = stratified_report(_fixture_cases(), ["missing prediction for X"])
    again = report_from_dict(json.loads(r.to_json()))
    assert again.per_vendor == r.per_vendor and again.warnings == r.warnings


def test_report_rejects_untagged():
    with pytest.raises(ValueError, match="vendor"):
        stratified_report([CaseScore("x", None, {"LV": 1, "LVM": 1, "RV": 1})])
    with pytest.raises(ValueError):
        stratified_report([])


def test_format_decimals():
    t = format_vendor_table({"A": {"LV": 0.5, "LVM": 0.25, "RV": 1.0}}, decimals=2)
    assert "0.25" in t and "0.250" not in t


def _pm(*vals):
    probs = np.array(vals, dtype=np.float64).reshape(len(vals), 1, 1, 1)
    return ProbabilityMap(probs, (1, 1, 1))


def test_ensemble_arithmetic():
    out = ensemble([_pm(0.8, 0.2), _pm(0.4, 0.6)])
    assert np.allclose(out.probs.ravel(), [0.6, 0.4])


def test_ensemble_permutation_invariant_and_idempotent(rng):
    maps = []
    for _ in range(4):
        raw = rng.random((3, 2, 2, 1))
        maps.append(ProbabilityMap(raw / raw.sum(axis=0), (1, 1, 1)))
    a = ensemble(maps).probs
    assert np.array_equal(a, ensemble(maps[::-1]).probs)
    assert np.array_equal(a, ensemble([maps[2], maps[0], maps[3], maps[1]]).probs)
    assert np.allclose(ensemble([maps[0], maps[0]]).probs, maps[0].probs)


def test_ensemble_hand_argmax():
    # 2x2 slice, two classes; the models disagree at two voxels
    m1 = np.array([[[0.9, 0.4], [0.3, 0.6]], [[0.1, 0.6], [0.7, 0.4]]])[..., None]
    m2 = np.array([[[0.7, 0.8], [0.1, 0.2]], [[0.3, 0.2], [0.9, 0.8]]])[..., None]
    out = ensemble([ProbabilityMap(m1, (1, 1, 1)), ProbabilityMap(m2, (1, 1, 1))])
    assert argmax_decode(out).labels[..., 0].tolist() == [[0, 0], [1, 1]]


def test_ensemble_errors():
    with pytest.raises(ValueError):
        ensemble([])
    with pytest.raises(ValueError, match="shape"):
        ensemble([_pm(0.5, 0.5), _pm(0.2, 0.3, 0.5)])
