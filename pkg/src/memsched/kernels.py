"""Backend selection for the hot loops.

The compiled extension is used when it was built, unless ``MEMSCHED_PURE=1``.
``use_backend`` switches explicitly (tests and the benchmark compare both).
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_active = None


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _ckernels is not None else [])


def use_backend(name: str) -> None:
    global _active
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _ckernels
    elif name == "python":
        _active = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def _pick_default():
    if os.environ.get("MEMSCHED_PURE") == "1" or _ckernels is None:
        use_backend("python")
    else:
        use_backend("compiled")


_pick_default()


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def list_schedule_times(dur, perm, K):
    if _active is _pykernels:
        return _pykernels.list_schedule_times(list(map(float, dur)), [int(p) for p in perm], int(K))
    starts, comps = _active.list_schedule_times(_f64(dur), _i64(perm), int(K))
    return [float(v) for v in starts], [float(v) for v in comps]


def peak_memory(mem, dur, perm, K):
    if _active is _pykernels:
        return float(_pykernels.peak_memory(list(map(float, mem)), list(map(float, dur)),
                                            [int(p) for p in perm], int(K)))
    return float(_active.peak_memory(_f64(mem), _f64(dur), _i64(perm), int(K)))


def hill_climb(mem, dur, perm0, K, msizes, pairs):
    return _active.hill_climb(_f64(mem), _f64(dur), _i64(perm0), int(K), _i64(msizes), _i64(pairs))


def knapsack_mask(weights, capacity):
    weights = [int(w) for w in weights]
    if _active is _pykernels or len(weights) > 63:
        return _pykernels.knapsack_mask(weights, int(capacity))
    return _active.knapsack_mask(_i64(weights), int(capacity))
