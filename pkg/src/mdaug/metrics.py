"""Dice scoring, vendor-stratified reports and probability-map ensembling."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .volumes import CLASS_NAMES, FOREGROUND, ProbabilityMap, SegmentationMask

REPORT_SCHEMA = "mdaug-dice-report/1"
FOREGROUND_NAMES = tuple(CLASS_NAMES[c] for c in FOREGROUND)


def _labels(m):
    return m.labels if isinstance(m, SegmentationMask) else np.asarray(m)


def dice(pred, gt, c: int, empty_value: float = 1.0) -> float:
    """``2|P & G| / (|P| + |G|)`` for class ``c``; ``empty_value`` when both are empty."""
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ValueError(f"prediction shape {p.shape} does not match ground truth {g.shape}")
    p, g = p == c, g == c
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return float(empty_value)
    return 2.0 * int(np.logical_and(p, g).sum()) / denom


def score_case(pred, gt, empty_value: float = 1.0) -> Dict[str, float]:
    return {CLASS_NAMES[c]: dice(pred, gt, c, empty_value) for c in FOREGROUND}


def mean_dice(scores: Mapping[str, float]) -> float:
    """Unweighted mean over LV, LVM and RV."""
    missing = [n for n in FOREGROUND_NAMES if n not in scores]
    if missing:
        raise KeyError(f"missing class scores: {missing}")
    return sum(float(scores[n]) for n in FOREGROUND_NAMES) / len(FOREGROUND_NAMES)


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    vendor: Optional[str]
    scores: Mapping[str, float]
    frame: Optional[str] = None


def _mean_by_class(rows: Iterable[Mapping[str, float]]) -> Dict[str, float]:
    rows = list(rows)
    return {n: float(np.mean([r[n] for r in rows])) for n in FOREGROUND_NAMES}


@dataclass
class DiceReport:
    cases: List[CaseScore]
    per_class: Dict[str, float] = field(default_factory=dict)
    per_vendor: Dict[str, Dict[str, float]] = field(default_factory=dict)
    per_vendor_patient: Dict[str, Dict[str, float]] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "cases": [
                {"case_id": c.case_id, "vendor": c.vendor, "frame": c.frame,
                 "scores": dict(c.scores), "mean": mean_dice(c.scores)}
                for c in self.cases
            ],
            "per_class": self.per_class,
            "per_vendor": self.per_vendor,
            "per_vendor_patient_averaged": self.per_vendor_patient,
            "counts": self.counts,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self, decimals: int = 4) -> str:
        return format_vendor_table(self.per_vendor, decimals)


def format_vendor_table(per_vendor: Mapping[str, Mapping[str, float]], decimals: int = 4) -> str:
    """Rows LV/LVM/RV, one column per vendor."""
    vendors = sorted(per_vendor)
    header = [""] + [f"Vendor {v}" for v in vendors]
    rows = [header] + [
        [name] + [f"{per_vendor[v][name]:.{decimals}f}" for v in vendors]
        for name in FOREGROUND_NAMES
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                  for i, (cell, w) in enumerate(zip(r, widths))).rstrip()
        for r in rows
    ) + "\n"


def stratified_report(cases: Sequence[CaseScore], warnings=()) -> DiceReport:
    """Per-vendor class means, frame-level and patient-averaged (ED/ES first)."""
    if not cases:
        raise ValueError("no cases to report")
    untagged = [c.case_id for c in cases if not c.vendor]
    if untagged:
        raise ValueError(f"cases without a vendor tag: {untagged}")
    by_vendor = defaultdict(list)
    for c in cases:
        by_vendor[c.vendor].append(c)
    per_vendor, per_patient, counts = {}, {}, {}
    for vendor, rows in sorted(by_vendor.items()):
        per_vendor[vendor] = _mean_by_class(r.scores for r in rows)
        patients = defaultdict(list)
        for r in rows:
            patients[r.case_id].append(r.scores)
        per_patient[vendor] = _mean_by_class(_mean_by_class(s) for s in patients.values())
        counts[vendor] = len(rows)
    return DiceReport(
        cases=list(cases),
        per_class=_mean_by_class(c.scores for c in cases),
        per_vendor=per_vendor,
        per_vendor_patient=per_patient,
        counts=counts,
        warnings=list(warnings),
    )


def report_from_dict(doc: Mapping) -> DiceReport:
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"not a {REPORT_SCHEMA} document")
    cases = [CaseScore(c["case_id"], c["vendor"], c["scores"], c.get("frame")) for c in doc["cases"]]
    return stratified_report(cases, doc.get("warnings", []))


def ensemble(maps: Sequence[ProbabilityMap]) -> ProbabilityMap:
    """Voxelwise mean of class probabilities."""
    if not maps:
        raise ValueError("ensemble needs at least one map")
    shape = maps[0].probs.shape
    for m in maps[1:]:
        if m.probs.shape != shape:
            raise ValueError(f"map shape {m.probs.shape} does not match {shape}")
    # sorting first makes the sum, and so the result, independent of map order
    stacked = np.sort(np.stack([m.probs for m in maps]), axis=0)
    probs = stacked.sum(axis=0) / len(maps)
    return ProbabilityMap(probs, maps[0].spacing)
