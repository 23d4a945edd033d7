"""Compiled vs pure-Python kernels on the hot paths.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends must return identical results; the script checks that before
timing anything.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from memsched import kernels
from memsched.static_opt import draw_proposals
from memsched.workload import default_task_table


def cases():
    table = default_task_table()
    mem = np.array(table.lengths, dtype=float)  # memory proportional to length
    dur = table.eta * mem
    perm = np.arange(len(mem))
    msizes, pairs = draw_proposals(np.random.default_rng(0), len(perm), 2000, 4)
    weights = np.random.default_rng(1).integers(1, 1000, 22)
    return {
        "peak_memory K=4": lambda: kernels.peak_memory(mem, dur, perm, 4),
        "hill_climb 2000 iters K=4": lambda: kernels.hill_climb(mem, dur, perm, 4, msizes, pairs),
        "knapsack 22 items cap 5000": lambda: kernels.knapsack_mask(weights, 5000),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; only the python backend is available")
    before = kernels.backend_name()
    try:
        results, times = {}, {}
        for b in backends:
            kernels.use_backend(b)
            for name, fn in cases().items():
                results[b, name] = fn()
                runs = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
                times[b, name] = min(timeit.repeat(fn, number=runs, repeat=args.repeat)) / runs
    finally:
        kernels.use_backend(before)

    print(f"{'kernel':30s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for name in cases():
        row = f"{name:30s}" + "".join(f"{times[b, name] * 1e3:11.3f} ms" for b in backends)
        if len(backends) > 1:
            if not _same(results["python", name], results["compiled", name]):
                raise SystemExit(f"backends disagree on {name}")
            row += f"  {times['python', name] / times['compiled', name]:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
