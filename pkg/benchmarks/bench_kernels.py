"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Workloads: the Jacobi eigensolver on random symmetric matrices, and the
batched information-spectrum kernel over every binary design of a class
(the inner loop of exhaustive search).
"""
from __future__ import annotations

import argparse
import importlib
import json
import math
import timeit

import numpy as np

from xover.design import all_permutations, enumerate_binary_counts
from xover.information import zero_floor
from xover.model import CovarianceSpec, build_cov, v_star


def load_backends():
    out = {"python": importlib.import_module("xover._pykernels")}
    try:
        out["cython"] = importlib.import_module("xover._ckernels")
    except ImportError:
        print("compiled kernels not built; timing the fallback only")
    return out


def jacobi_workloads(rng):
    for n in (3, 6, 18, 40):
        a = rng.normal(size=(n, n))
        yield f"jacobi n={n}", (lambda a: lambda k: k.jacobi_eigh(a + a.T))(a), 1


def spectra_workloads():
    for t, n in ((3, 6), (3, 12), (4, 3)):
        seqs = np.array(all_permutations(t), dtype=np.int64) - 1
        counts = np.stack(list(enumerate_binary_counts(t, n)))
        vs = v_star(build_cov(CovarianceSpec.ar1(0.3), t))
        floor = zero_floor(n, vs)
        fn = (lambda s, c, v, t, f: lambda k: k.block_spectra(s, c, v, t, 1e-9, f))(seqs, counts, vs, t, floor)
        yield f"block_spectra t={t} n={n} ({len(counts)} designs)", fn, len(counts)


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 10**5:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this path")
    args = ap.parse_args(argv)

    backends = load_backends()
    rng = np.random.default_rng(0)
    rows = []
    for name, work, items in [*jacobi_workloads(rng), *spectra_workloads()]:
        times = {b: best_time(lambda: work(k), args.repeat) for b, k in backends.items()}
        row = {"workload": name, "items": items, **{f"{b}_s": t for b, t in times.items()}}
        if len(times) == 2:
            row["speedup"] = times["python"] / times["cython"]
        rows.append(row)

    width = max(len(r["workload"]) for r in rows)
    head = f"{'workload':<{width}}  " + "  ".join(f"{b + ' (s)':>12}" for b in backends)
    print(head + ("   speedup" if len(backends) == 2 else ""))
    for r in rows:
        cells = "  ".join(f"{r[b + '_s']:>12.3e}" for b in backends)
        extra = f"  {r['speedup']:>8.1f}x" if "speedup" in r else ""
        print(f"{r['workload']:<{width}}  {cells}{extra}")
    if len(backends) == 2:
        geo = math.exp(np.mean([math.log(r["speedup"]) for r in rows]))
        print(f"geometric-mean speedup: {geo:.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
