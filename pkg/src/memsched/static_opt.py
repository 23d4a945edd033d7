"""Peak-memory minimization over processing orders by stochastic hill climbing."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .simulator import peak_memory, sequential_order
from .workload import TaskTable, as_permutation, make_rng


@dataclass(frozen=True)
class HillClimbConfig:
    K: int
    iters: int = 20000
    max_swaps: int = 4
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.max_swaps < 1:
            raise ValueError("max_swaps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")


def propose(order: Sequence[int], n_swaps: int, rng: np.random.Generator) -> list[int]:
    """Apply ``n_swaps`` uniformly drawn transpositions (i == j allowed)."""
    if n_swaps < 1:
        raise ValueError("n_swaps must be >= 1")
    perm = list(order)
    pairs = rng.integers(0, len(perm), size=(n_swaps, 2))
    return apply_swaps(perm, pairs)


def apply_swaps(order: Sequence[int], pairs) -> list[int]:
    """Compose position swaps; the last pair acts first, as in s_1 o ... o s_M."""
    perm = list(order)
    for i, j in reversed([tuple(map(int, p)) for p in pairs]):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def draw_proposals(rng: np.random.Generator, n: int, iters: int, max_swaps: int):
    """Pre-draw swap counts and position pairs so both kernel backends see
    identical randomness."""
    msizes = rng.integers(1, max_swaps + 1, size=iters)
    pairs = rng.integers(0, n, size=(iters, max_swaps, 2))
    return msizes, pairs


def _restart(args):
    mem, dur, perm0, cfg, index = args
    rng = make_rng(cfg.seed, index)
    msizes, pairs = draw_proposals(rng, len(perm0), cfg.iters, cfg.max_swaps)
    perm, peak = kernels.hill_climb(mem, dur, perm0, cfg.K, msizes, pairs)
    return index, [int(p) + 1 for p in perm], float(peak)


def hill_climb(table: TaskTable, order0: Sequence[int] | None, cfg: HillClimbConfig,
               workers: int = 1) -> tuple[list[int], float]:
    """Best-of-restarts hill climb; every restart starts from ``order0``.

    Restart ``t`` draws from its own stream ``(seed, t)``, so the result does
    not depend on ``workers``.
    """
    if order0 is None:
        order0 = sequential_order(table.n)
    perm0 = as_permutation(order0, table.n) - 1
    if cfg.K < 1:
        raise ValueError("K must be >= 1")
    mem, dur = table.memories(), table.durations()
    jobs = [(mem, dur, perm0, cfg, t) for t in range(cfg.restarts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_restart, jobs))
    else:
        results = [_restart(job) for job in jobs]
    # min peak, lowest restart index on ties
    _, best_order, best_peak = min(results, key=lambda r: (r[2], r[0]))
    return best_order, best_peak


def climb_trajectory(table: TaskTable, order0: Sequence[int], K: int, iters: int,
                     max_swaps: int, rng: np.random.Generator) -> list[float]:
    """Incumbent peak after each iteration of a single restart (slow path,
    used to inspect the search)."""
    current = list(order0)
    current_peak = peak_memory(table, current, K)
    history = [current_peak]
    for _ in range(iters):
        m = int(rng.integers(1, max_swaps + 1))
        cand = propose(current, m, rng)
        p = peak_memory(table, cand, K)
        if p < current_peak:
            current, current_peak = cand, p
        history.append(current_peak)
    return history


def moving_average(order: Sequence[int], K: int) -> list[float]:
    """Window-K means of task ids along the order."""
    n = len(order)
    if K < 1 or K > n:
        raise ValueError(f"window K must be in 1..{n}, got {K}")
    ids = np.asarray(order, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(ids)])
    return ((csum[K:] - csum[:-K]) / K).tolist()


def optimize_orders(table: TaskTable, ks: Sequence[int], iters: int = 20000, max_swaps: int = 4,
                    restarts: int = 10, seed: int = 0, workers: int = 1) -> dict[int, dict]:
    """Optimized order per K, ready to be stored and reused at run time."""
    catalog = {}
    seq = sequential_order(table.n)
    for K in ks:
        cfg = HillClimbConfig(K=K, iters=iters, max_swaps=max_swaps, restarts=restarts, seed=seed)
        order, peak = hill_climb(table, seq, cfg, workers=workers)
        seq_peak = peak_memory(table, seq, K)
        catalog[K] = {
            "order": order,
            "peak": peak,
            "sequential_peak": seq_peak,
            "decrease_pct": 100.0 * (seq_peak - peak) / seq_peak,
        }
    return catalog


def save_catalog(catalog: dict[int, dict], path, config: dict | None = None) -> None:
    payload = {str(k): v for k, v in sorted(catalog.items())}
    if config is not None:
        payload = {"config": config, "orders": payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


def load_catalog(path) -> dict[int, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    orders = payload.get("orders", payload)
    return {int(k): v for k, v in orders.items()}
