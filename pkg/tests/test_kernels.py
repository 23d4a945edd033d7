import os
import subprocess
import sys

import numpy as np
import pytest

from memsched import _pykernels, kernels

compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")


def both(fn, *args):
    out = []
    for name in ("python", "compiled"):
        kernels.use_backend(name)
        out.append(fn(*args))
    return out


@pytest.fixture(autouse=True)
def restore():
    previous = kernels.backend_name()
    yield
    kernels.use_backend(previous)


@compiled
def test_schedule_and_peak_bit_identical():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 30))
        mem = rng.uniform(1, 300, n)
        dur = rng.integers(1, 9, n).astype(float) if rng.random() < 0.5 else rng.uniform(0.1, 50, n)
        perm = rng.permutation(n)
        K = int(rng.integers(1, n + 2))
        a, b = both(kernels.list_schedule_times, dur, perm, K)
        assert a == b
        a, b = both(kernels.peak_memory, mem, dur, perm, K)
        assert a == b


@compiled
def test_hill_climb_identical():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(3, 23))
        mem = rng.uniform(1, 300, n)
        msizes = rng.integers(1, 5, 500)
        pairs = rng.integers(0, n, (500, 4, 2))
        perm0 = np.arange(n)
        K = int(rng.integers(1, 6))
        (pa, ka), (pb, kb) = both(kernels.hill_climb, mem, mem, perm0, K, msizes, pairs)
        assert list(pa) == list(pb) and ka == kb


@compiled
def test_knapsack_identical():
    rng = np.random.default_rng(2)
    for _ in range(300):
        weights = rng.integers(1, 60, int(rng.integers(1, 20))).tolist()
        cap = int(rng.integers(0, 300))
        a, b = both(kernels.knapsack_mask, weights, cap)
        assert a == b


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_pure_env_selects_python():
    env = dict(os.environ, MEMSCHED_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from memsched import kernels; print(kernels.backend_name())"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == "python"


def test_python_knapsack_tie_break():
    # equal totals: more items, then lowest positions
    assert _pykernels.knapsack_mask([3, 3, 6], 6) == (6, 0b011)
    assert _pykernels.knapsack_mask([1, 2, 3, 4], 5) == (5, 0b1001)
