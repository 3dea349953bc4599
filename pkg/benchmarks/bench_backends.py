"""Compare the compiled kernels against the numpy fallback.

Times each kernel on fixed inputs, checks the two backends agree bit for bit,
then runs the end-to-end bench on both. Usage::

    python3 benchmarks/bench_backends.py [--shape 256x256] [--duration 3] [--json out.json]
"""
import argparse
import json
import sys
import timeit

import numpy as np

from mdaug import kernels
from mdaug.cli import parse_shape, run_bench


def _inputs(shape, rng):
    data = rng.normal(size=shape)
    labels = rng.integers(0, 4, size=shape).astype(np.uint8)
    grid = np.indices(shape, dtype=np.float64).reshape(3, -1)
    coords = grid + rng.uniform(-2, 2, size=grid.shape)
    return data, labels, coords


def kernel_cases(shape):
    data, labels, coords = _inputs(shape, np.random.default_rng(0))
    axes = (0, 1) if shape[2] == 1 else (0, 1, 2)
    return {
        "sample_linear": lambda: kernels.sample_linear(data, coords, float(data.min())),
        "sample_nearest": lambda: kernels.sample_nearest(labels, coords, 0),
        "gaussian_smooth(sigma=1)": lambda: kernels.gaussian_smooth(data, 1.0, axes),
        "gaussian_smooth(sigma=12)": lambda: kernels.gaussian_smooth(data, 12.0, axes),
    }


def time_kernels(shape, repeat=5):
    rows = []
    cases = kernel_cases(shape)
    for name, fn in cases.items():
        row = {"kernel": name}
        outputs = {}
        for backend in kernels.available_backends():
            with kernels.use_backend(backend):
                outputs[backend] = fn()
                number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
                best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
            row[backend + "_ms"] = best * 1e3
        values = list(outputs.values())
        row["identical"] = all(np.array_equal(values[0], v) for v in values[1:])
        if "cython_ms" in row:
            row["speedup"] = row["python_ms"] / row["cython_ms"]
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shape", default="256x256")
    ap.add_argument("--preset", default="mnms-nnunet")
    ap.add_argument("--duration", type=float, default=3.0)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    shape = parse_shape(args.shape)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)

    rows = time_kernels(shape)
    print(f"kernels on {'x'.join(map(str, shape))}")
    print(f"{'kernel':28s}" + "".join(f"{b + ' ms':>12s}" for b in backends) + f"{'speedup':>10s}  identical")
    for r in rows:
        cells = "".join(f"{r[b + '_ms']:12.3f}" for b in backends)
        speed = f"{r['speedup']:9.1f}x" if "speedup" in r else f"{'-':>10s}"
        print(f"{r['kernel']:28s}{cells}{speed}  {r['identical']}")

    end_to_end = {}
    for backend in backends:
        rep = run_bench(args.preset, shape, args.duration, 1, backend=backend)
        end_to_end[backend] = rep
    print(f"\nend to end ({args.preset}, 1 worker)")
    for backend, rep in end_to_end.items():
        print(f"  {backend:8s} {rep['samples_per_sec']:8.1f} samples/s")

    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"shape": list(shape), "kernels": rows, "end_to_end": end_to_end}, fh,
                      indent=2, sort_keys=True)
    return 0 if all(r["identical"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
