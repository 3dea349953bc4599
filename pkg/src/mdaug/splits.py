"""Experiment split planners; every planner is a pure function of (cases, seed).

Case order within a vendor is fixed by sorting ids on
``sha256(f"{seed}:{case_id}")``, so regenerating a manifest is bit-identical
on any platform.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .volumes import CaseRecord

MANIFEST_SCHEMA = "mdaug-manifest/1"
PROTOCOLS = ("cross-domain", "holdout-four", "fraction-sweep", "bn-experiment", "five-fold")


class InsufficientCasesError(ValueError):
    pass


@dataclass(frozen=True)
class Fold:
    name: str
    train: Tuple[str, ...]
    val: Tuple[str, ...]
    excluded: Tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("train", "val", "excluded"):
            object.__setattr__(self, attr, tuple(sorted(getattr(self, attr))))
        if set(self.train) & set(self.val):
            raise ValueError(f"fold {self.name}: train and validation overlap")


@dataclass(frozen=True)
class SplitManifest:
    protocol: str
    seed: int
    folds: Tuple[Fold, ...]
    meta: Mapping = field(default_factory=dict)

    def fold(self, name: str) -> Fold:
        for f in self.folds:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "protocol": self.protocol,
            "seed": self.seed,
            "folds": [
                {"name": f.name, "train": list(f.train), "val": list(f.val),
                 "excluded": list(f.excluded)}
                for f in self.folds
            ],
            "meta": dict(self.meta),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SplitManifest":
        if doc.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"not a {MANIFEST_SCHEMA} document")
        folds = tuple(
            Fold(f["name"], f["train"], f["val"], f.get("excluded", ())) for f in doc["folds"]
        )
        return cls(doc["protocol"], int(doc["seed"]), folds, doc.get("meta", {}))


def keyed_order(case_ids: Iterable[str], seed: int) -> List[str]:
    return sorted(case_ids, key=lambda cid: (hashlib.sha256(f"{seed}:{cid}".encode()).hexdigest(), cid))


def _by_vendor(cases: Sequence[CaseRecord], seed: int) -> Dict[str, List[str]]:
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate case ids")
    out: Dict[str, List[str]] = {}
    for c in cases:
        if c.annotated:
            out.setdefault(c.vendor, []).append(c.case_id)
    return {v: keyed_order(ids_, seed) for v, ids_ in out.items()}


def _need(pools, vendor, n, protocol):
    have = len(pools.get(vendor, []))
    if have < n:
        raise InsufficientCasesError(
            f"{protocol}: needs >= {n} annotated cases from vendor {vendor}, found {have}"
        )


def _other(vendor: str) -> str:
    if vendor not in ("A", "B"):
        raise ValueError(f"no default evaluation vendor for {vendor!r}")
    return "B" if vendor == "A" else "A"


def plan_cross_domain(cases, train_vendor: str, seed: int = 0, eval_vendor: str = None,
                      min_cases: int = 75) -> SplitManifest:
    """Train on every annotated case of one vendor, validate on every case of another."""
    eval_vendor = eval_vendor or _other(train_vendor)
    pools = _by_vendor(cases, seed)
    _need(pools, train_vendor, min_cases, "cross-domain")
    _need(pools, eval_vendor, min_cases, "cross-domain")
    fold = Fold(f"{train_vendor}->{eval_vendor}", pools[train_vendor], pools[eval_vendor])
    meta = {"train_vendor": train_vendor, "eval_vendor": eval_vendor,
            "vendor_counts": {train_vendor: len(fold.train), eval_vendor: len(fold.val)}}
    return SplitManifest("cross-domain", seed, (fold,), meta)


def plan_holdout_four(cases, seed: int = 0, n_val: int = 25, n_train: int = 50) -> SplitManifest:
    """Shared 25+25 validation; trains A (50), B (50) and disjoint mixed-I / mixed-II (25+25 each)."""
    pools = _by_vendor(cases, seed)
    for v in "AB":
        _need(pools, v, n_val + n_train, "holdout-four")
    val = pools["A"][:n_val] + pools["B"][:n_val]
    train_a = pools["A"][n_val:n_val + n_train]
    train_b = pools["B"][n_val:n_val + n_train]
    rest = pools["A"][n_val + n_train:] + pools["B"][n_val + n_train:]
    half = n_train // 2
    arms = {
        "A": train_a,
        "B": train_b,
        "mixed-I": train_a[:half] + train_b[:half],
        "mixed-II": train_a[half:2 * half] + train_b[half:2 * half],
    }
    folds = tuple(
        Fold(name, tr, val, sorted(set(train_a + train_b + rest) - set(tr))) for name, tr in arms.items()
    )
    meta = {"validation_per_vendor": n_val, "train_size": n_train,
            "vendor_counts": {v: len(pools[v]) for v in "AB"}}
    return SplitManifest("holdout-four", seed, folds, meta)


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def plan_fraction_sweep(cases, base_vendor: str = "B", target_vendor: str = "A",
                        percentages: Sequence[int] = tuple(range(0, 101, 10)), seed: int = 0,
                        n_val: int = 25, n_train: int = 50) -> SplitManifest:
    """Fixed base-vendor stack plus a nested prefix of ``round(pct/100 * 50)`` target cases."""
    allowed = {float(p) for p in range(0, 101, 10)}
    if not len(percentages) or any(float(p) not in allowed for p in percentages):
        raise ValueError(f"percentages must be drawn from 0, 10, ..., 100; got {list(percentages)}")
    if base_vendor == target_vendor:
        raise ValueError("base and target vendor must differ")
    pools = _by_vendor(cases, seed)
    for v in (base_vendor, target_vendor):
        _need(pools, v, n_val + n_train, "fraction-sweep")
    val = pools[base_vendor][:n_val] + pools[target_vendor][:n_val]
    base = pools[base_vendor][n_val:n_val + n_train]
    target_pool = pools[target_vendor][n_val:n_val + n_train]
    folds = []
    added = {}
    for p in sorted({int(p) for p in percentages}):
        n = _round_half_up(p * n_train / 100)
        added[str(p)] = n
        tr = base + target_pool[:n]
        folds.append(Fold(f"{p}%", tr, val, target_pool[n:]))
    meta = {"base_vendor": base_vendor, "target_vendor": target_vendor,
            "target_cases_added": added, "validation_per_vendor": n_val}
    return SplitManifest("fraction-sweep", seed, tuple(folds), meta)


def plan_bn_experiment(cases, seed: int = 0, n_val: int = 15, n_train: int = 60) -> SplitManifest:
    """15-per-vendor hold-out shared by trains A (60), B (60) and AB (120)."""
    pools = _by_vendor(cases, seed)
    for v in "AB":
        _need(pools, v, n_val + n_train, "bn-experiment")
    val = pools["A"][:n_val] + pools["B"][:n_val]
    ta = pools["A"][n_val:n_val + n_train]
    tb = pools["B"][n_val:n_val + n_train]
    folds = (Fold("A", ta, val, tb), Fold("B", tb, val, ta), Fold("AB", ta + tb, val))
    meta = {"validation_per_vendor": n_val, "train_per_vendor": n_train,
            "vendor_counts": {v: len(pools[v]) for v in "AB"}}
    return SplitManifest("bn-experiment", seed, folds, meta)


def plan_five_fold(cases, seed: int = 0, vendors: Sequence[str] = ("A", "B"), k: int = 5) -> SplitManifest:
    """Vendor-stratified k-fold: validation sets partition the annotated cases.

    Cases are dealt round-robin, vendor after vendor, so fold sizes and
    per-fold vendor counts each differ by at most one.
    """
    pools = _by_vendor(cases, seed)
    ordered = [cid for v in vendors for cid in pools.get(v, [])]
    if len(ordered) < k:
        raise InsufficientCasesError(f"five-fold: needs >= {k} annotated cases, found {len(ordered)}")
    vals = [[] for _ in range(k)]
    for i, cid in enumerate(ordered):
        vals[i % k].append(cid)
    folds = []
    for i, val in enumerate(vals):
        held = set(val)
        folds.append(Fold(f"fold{i}", [c for c in ordered if c not in held], val))
    folds = tuple(folds)
    meta = {"k": k, "vendor_counts": {v: len(pools.get(v, [])) for v in vendors}}
    return SplitManifest("five-fold", seed, folds, meta)


def plan(protocol: str, cases, seed: int = 0, **kwargs) -> SplitManifest:
    planners = {
        "cross-domain": lambda: plan_cross_domain(cases, kwargs.get("train_vendor", "A"), seed,
                                                  kwargs.get("eval_vendor")),
        "holdout-four": lambda: plan_holdout_four(cases, seed),
        "fraction-sweep": lambda: plan_fraction_sweep(
            cases, kwargs.get("base_vendor", "B"), kwargs.get("target_vendor", "A"),
            kwargs.get("percentages", tuple(range(0, 101, 10))), seed),
        "bn-experiment": lambda: plan_bn_experiment(cases, seed),
        "five-fold": lambda: plan_five_fold(cases, seed),
    }
    if protocol not in planners:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {', '.join(PROTOCOLS)}")
    return planners[protocol]()
