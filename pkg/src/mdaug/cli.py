"""``mdaug`` command line: split planning, augmentation, previews, Dice
evaluation, reporting, ensembling and throughput benchmarks.

Exit codes: 0 success, 1 some per-item failures, 2 usage, 3 validation, 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels, nifti
from .metrics import CaseScore, report_from_dict, score_case, stratified_report, format_vendor_table
from .metrics import ensemble as ensemble_maps
from .pipeline import SampleRequest, SampleSource, SampleStream, augment_sample
from .presets import PresetError, load_preset
from .splits import PROTOCOLS, plan
from .volumes import CaseRecord, ProbabilityMap, SegmentationMask, Volume, argmax_decode

log = logging.getLogger("mdaug")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 0, 1, 2, 3, 4
DATASET_SCHEMA = "mdaug-dataset/1"
BENCH_SCHEMA = "mdaug-bench/1"
NII_SUFFIXES = (".nii.gz", ".nii")


class ValidationError(Exception):
    pass


def _strip_nii(name: str):
    for suf in NII_SUFFIXES:
        if name.endswith(suf):
            return name[: -len(suf)]
    return None


def _split_frame(stem: str):
    for frame in ("ED", "ES"):
        if stem.endswith("_" + frame):
            return stem[: -len(frame) - 1], frame
    return stem, None


def load_dataset(path):
    """Read a ``mdaug-dataset/1`` manifest into (records, entries)."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("schema") != DATASET_SCHEMA:
        raise ValidationError(f"{path}: expected schema {DATASET_SCHEMA!r}")
    records, entries = [], []
    for entry in doc.get("cases", []):
        try:
            records.append(CaseRecord(
                str(entry["case_id"]), entry["vendor"], int(entry["centre"]),
                bool(entry.get("annotated", True)), tuple(entry.get("frames", ("ED", "ES"))),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: bad case entry {entry!r}: {exc}") from exc
        entries.append(entry)
    return records, entries


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _table(rows, header):
    rows = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


# --- plan-splits -----------------------------------------------------------

def cmd_plan_splits(args) -> int:
    records, _ = load_dataset(args.dataset)
    kwargs = {"train_vendor": args.train_vendor, "eval_vendor": args.eval_vendor,
              "base_vendor": args.base_vendor, "target_vendor": args.target_vendor}
    if args.percentages:
        kwargs["percentages"] = [int(p) for p in args.percentages.split(",")]
    manifest = plan(args.protocol, records, args.seed, **kwargs)
    text = manifest.to_json()
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    summary = _table([(f.name, len(f.train), len(f.val), len(f.excluded)) for f in manifest.folds],
                     ("fold", "train", "val", "excluded"))
    (sys.stderr if not args.out else sys.stdout).write(summary)
    return EXIT_OK


# --- augment ---------------------------------------------------------------

def _sources_from_manifest(manifest, base: Path):
    _, entries = load_dataset(manifest)
    sources = []
    for e in entries:
        images, masks = e.get("images", {}), e.get("masks", {})
        for frame in sorted(images):
            mask = masks.get(frame)
            sources.append(SampleSource(
                str(e["case_id"]), base / images[frame], base / mask if mask else None, frame))
    return sources


def _sources_from_dir(in_dir: Path):
    sources = []
    for p in sorted(in_dir.iterdir()):
        stem = _strip_nii(p.name)
        if stem is None or stem.endswith("_mask"):
            continue
        mask = next((in_dir / (stem + "_mask" + s) for s in NII_SUFFIXES
                     if (in_dir / (stem + "_mask" + s)).exists()), None)
        case, frame = _split_frame(stem)
        sources.append(SampleSource(case, p, mask, frame))
    return sources


def cmd_augment(args) -> int:
    preset = load_preset(args.preset)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    sources = (_sources_from_manifest(args.manifest, in_dir) if args.manifest
               else _sources_from_dir(in_dir))
    if args.n_samples < 0:
        raise ValidationError("--n-samples must be >= 0")
    out = Path(args.out or "augmented")
    out.mkdir(parents=True, exist_ok=True)
    if args.n_samples == 0:
        return EXIT_OK
    if not sources:
        raise ValidationError(f"no NIfTI volumes found in {in_dir}")
    failures = 0
    stream = SampleStream(sources, preset, args.seed, args.workers, n_samples=args.n_samples,
                          normalize=args.zscore)
    for item in stream:
        tag = item.case_id + (f"_{item.frame}" if item.frame else "") + f"_s{item.index:05d}"
        if not item.ok:
            failures += 1
            log.error("sample %d (%s): %s", item.index, item.case_id, item.error)
            continue
        nifti.save_volume(out / f"{tag}.nii.gz", item.volume, args.datatype)
        if item.mask is not None:
            nifti.save_mask(out / f"{tag}_mask.nii.gz", item.mask)
    print(f"wrote {stream.stats.produced - failures} samples to {out} "
          f"({failures} failed, {stream.stats.samples_per_sec:.1f} samples/s)")
    return EXIT_PARTIAL if failures else EXIT_OK


# --- preview ---------------------------------------------------------------

def preview_slices(nz: int):
    return sorted({0, nz // 2, nz - 1})


def _contour(labels2d: np.ndarray) -> np.ndarray:
    fg = labels2d > 0
    edge = np.zeros_like(fg)
    padded = np.pad(labels2d, 1, mode="edge")
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted = padded[1 + dx:padded.shape[0] - 1 + dx, 1 + dy:padded.shape[1] - 1 + dy]
        edge |= fg & (shifted != labels2d)
    return edge


def to_pgm(slice2d: np.ndarray, outline=None) -> bytes:
    """8-bit binary graymap; window = slice min/max; rows run along y."""
    img = np.asarray(slice2d, dtype=np.float64).T
    lo, hi = img.min(), img.max()
    grey = np.zeros(img.shape, np.uint8) if hi == lo else np.round((img - lo) / (hi - lo) * 255).astype(np.uint8)
    if outline is not None:
        grey[np.asarray(outline).T] = 255
    h, w = grey.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + grey.tobytes()


def cmd_preview(args) -> int:
    preset = load_preset(args.preset)
    preset = replace(preset, spatial=replace(preset.spatial, patch_size=None))
    v = nifti.load_volume(args.volume)
    m = nifti.load_mask(args.mask) if args.mask else None
    av, am = augment_sample(v, m, preset, SampleRequest(Path(args.volume).name, args.index, args.seed))
    out = Path(args.out or "preview")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for label, vol, mask in (("before", v, m), ("after", av, am)):
        for k in preview_slices(vol.dims[2]):
            outline = _contour(mask.labels[:, :, k]) if mask is not None else None
            path = out / f"{label}_z{k:03d}.pgm"
            path.write_bytes(to_pgm(vol.data[:, :, k], outline))
            written.append(path.name)
    print(f"wrote {len(written)} images to {out}")
    return EXIT_OK


# --- dice / report -----------------------------------------------------------

def _nii_index(directory: Path):
    out = {}
    for p in sorted(directory.iterdir()):
        stem = _strip_nii(p.name)
        if stem is not None:
            out[stem] = p
    return out


def cmd_dice(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory {d} does not exist")
    records, _ = load_dataset(args.dataset)
    vendor_of = {r.case_id: r.vendor for r in records}
    preds, gts = _nii_index(pred_dir), _nii_index(gt_dir)
    common = sorted(set(preds) & set(gts))
    warnings = []
    for key in sorted(set(preds) ^ set(gts)):
        where = "prediction" if key in gts else "ground truth"
        warnings.append(f"{key}: missing {where}, excluded")
    if not common:
        raise ValidationError("no case ids shared by prediction and ground-truth directories")

    def score(key):
        case, frame = _split_frame(key)
        if case not in vendor_of:
            raise ValidationError(f"case {case!r} is not in the dataset manifest")
        pred, gt = nifti.load_mask(preds[key]), nifti.load_mask(gts[key])
        return CaseScore(case, vendor_of[case], score_case(pred, gt, args.empty_value), frame)

    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as pool:
            cases = list(pool.map(score, common))
    else:
        cases = [score(k) for k in common]
    for w in warnings:
        log.warning(w)
    report = stratified_report(cases, warnings)
    out = Path(args.out or "dice")
    _write_text(out / "dice_report.json", report.to_json() + "\n")
    _write_text(out / "dice_report.txt", report.to_text())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_report(args) -> int:
    doc = json.loads(Path(args.input).read_text(encoding="utf-8"))
    try:
        report = report_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{args.input}: malformed report ({exc})") from exc
    table = report.per_vendor_patient if args.order == "patient" else report.per_vendor
    text = format_vendor_table(table)
    if args.out:
        out = Path(args.out)
        _write_text(out / "dice_report.json", report.to_json() + "\n")
        _write_text(out / "dice_report.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


# --- ensemble --------------------------------------------------------------

def load_probability_map(path: Path) -> ProbabilityMap:
    if path.suffix == ".npz":
        with np.load(path) as z:
            spacing = tuple(z["spacing"]) if "spacing" in z else (1.0, 1.0, 1.0)
            return ProbabilityMap(z["probs"], spacing)
    return ProbabilityMap(np.load(path))


def cmd_ensemble(args) -> int:
    dirs = [Path(d) for d in args.map_dirs]
    for d in dirs:
        if not d.is_dir():
            raise FileNotFoundError(f"directory {d} does not exist")
    by_case = {}
    for d in dirs:
        for p in sorted(d.iterdir()):
            if p.suffix in (".npy", ".npz"):
                by_case.setdefault(p.stem, []).append(p)
    if not by_case:
        raise ValidationError("no probability maps (.npy/.npz) found")
    out = Path(args.out or "ensemble")
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for case, paths in sorted(by_case.items()):
        try:
            mask = argmax_decode(ensemble_maps([load_probability_map(p) for p in paths]))
            nifti.save_mask(out / f"{case}.nii.gz", mask)
        except ValueError as exc:
            failures += 1
            log.error("%s: %s", case, exc)
    print(f"decoded {len(by_case) - failures} cases into {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


# --- bench -----------------------------------------------------------------

def parse_shape(text: str):
    dims = tuple(int(t) for t in text.lower().split("x"))
    if len(dims) not in (2, 3) or min(dims) < 1:
        raise ValidationError(f"shape must look like 256x256 or 128x128x16, got {text!r}")
    return dims if len(dims) == 3 else dims + (1,)


def synthetic_dataset(shape, n: int = 4, seed: int = 0):
    """Smooth random intensities with a ring-shaped label, z-scored."""
    rng = np.random.default_rng(seed)
    sources = []
    xs = [np.arange(d) - (d - 1) / 2 for d in shape]
    gx, gy = np.meshgrid(xs[0], xs[1], indexing="ij")
    r = np.hypot(gx, gy)[:, :, None].repeat(shape[2], axis=2)
    ref = min(shape[0], shape[1]) / 2
    for i in range(n):
        img = kernels.gaussian_smooth(rng.normal(size=shape), 2.0, (0, 1)) + np.exp(-(r / ref) ** 2)
        img = (img - img.mean()) / img.std()
        lab = np.zeros(shape, np.uint8)
        lab[r < 0.3 * ref] = 1
        lab[(r >= 0.3 * ref) & (r < 0.4 * ref)] = 2
        lab[(r >= 0.5 * ref) & (r < 0.6 * ref)] = 3
        spacing = (1.4, 1.4, 10.0 if shape[2] > 1 else 1.0)
        sources.append(SampleSource(f"synthetic{i}", Volume(img, spacing), SegmentationMask(lab, spacing)))
    return sources


def run_bench(preset, shape, duration: float, workers: int, seed: int = 0,
              backend: str = "auto", max_samples=None) -> dict:
    if backend != "auto":
        kernels.set_backend(backend)
    preset = load_preset(preset)
    stream = SampleStream(synthetic_dataset(shape, seed=seed), preset, seed, workers, endless=True)
    n = 0
    for item in stream:
        if not item.ok:
            raise RuntimeError(item.error)
        n += 1
        if stream.stats.elapsed >= duration or (max_samples and n >= max_samples):
            break
    stats = stream.stats
    return {
        "schema": BENCH_SCHEMA,
        "preset": preset.name,
        "shape": list(shape),
        "workers": workers,
        "backend": kernels.BACKEND,
        "samples": stats.produced,
        "elapsed_sec": stats.elapsed,
        "samples_per_sec": stats.samples_per_sec,
        "breakdown": {k: v / max(stats.produced, 1) for k, v in sorted(stats.timings.items())},
        "peak_in_flight": stats.peak_in_flight,
    }


def bench_text(report: dict) -> str:
    rows = [(k, report[k]) for k in ("preset", "shape", "workers", "backend", "samples")]
    rows.append(("samples_per_sec", f"{report['samples_per_sec']:.1f}"))
    rows.append(("peak_in_flight", report["peak_in_flight"]))
    rows += [(f"  {k} (ms/sample)", f"{v * 1e3:.3f}") for k, v in report["breakdown"].items()]
    return _table(rows, ("metric", "value"))


def cmd_bench(args) -> int:
    report = run_bench(args.preset, parse_shape(args.shape), args.duration, args.workers,
                       args.seed, args.backend)
    text = bench_text(report)
    if args.out:
        out = Path(args.out)
        _write_text(out / "bench.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        _write_text(out / "bench.txt", text)
    sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--config", help="JSON file supplying defaults for any option")
    common.add_argument("--out", help="output file or directory")

    parser = argparse.ArgumentParser(prog="mdaug", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan-splits", parents=[common], help="write a split manifest")
    p.add_argument("--protocol", required=True, choices=PROTOCOLS)
    p.add_argument("--dataset", required=True, help="mdaug-dataset/1 manifest")
    p.add_argument("--train-vendor", default="A")
    p.add_argument("--eval-vendor")
    p.add_argument("--base-vendor", default="B")
    p.add_argument("--target-vendor", default="A")
    p.add_argument("--percentages", help="comma-separated, e.g. 0,10,30,100")
    p.set_defaults(func=cmd_plan_splits)

    p = sub.add_parser("augment", parents=[common], help="materialize augmented samples")
    p.add_argument("--preset", default="mnms-nnunet")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--manifest", help="dataset manifest; paths relative to --in-dir")
    p.add_argument("--n-samples", type=int, default=1)
    p.add_argument("--datatype", default="float32", choices=["float32", "float64"])
    p.add_argument("--zscore", action="store_true", help="z-score inputs before augmenting")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("preview", parents=[common], help="before/after slice images")
    p.add_argument("--volume", required=True)
    p.add_argument("--mask")
    p.add_argument("--preset", default="mnms-nnunet")
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("dice", parents=[common], help="score predictions against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--empty-value", type=float, default=1.0)
    p.set_defaults(func=cmd_dice)

    p = sub.add_parser("report", parents=[common], help="render a Dice report as a vendor table")
    p.add_argument("--input", required=True)
    p.add_argument("--order", choices=["frame", "patient"], default="frame")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ensemble", parents=[common], help="average probability maps and decode")
    p.add_argument("map_dirs", nargs="+")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("bench", parents=[common], help="augmentation throughput")
    p.add_argument("--preset", default="mnms-nnunet")
    p.add_argument("--shape", default="256x256")
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--backend", choices=["auto", "cython", "python"], default="auto")
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            for a in sp._actions:
                if a.dest in cfg:
                    # a configured value satisfies a required option
                    a.required = False
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        print(f"mdaug: config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("mdaug: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except nifti.NiftiError as exc:
        print(f"mdaug: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, PresetError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"mdaug: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"mdaug: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
