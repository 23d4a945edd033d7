"""Deterministic list scheduling on K identical workers with a memory trace.

Activity intervals are half-open, ``[start, completion)``: a task finishing at
t releases its memory before a task starting at t is charged. Simultaneous
completions free their slots in permutation order.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .workload import TaskTable, as_permutation


@dataclass(frozen=True)
class ScheduleTrace:
    starts: dict[int, float]
    completions: dict[int, float]
    memory_trace: list[tuple[float, float]]
    peak: float
    makespan: float

    def summary(self) -> dict:
        return {
            "peak": self.peak,
            "makespan": self.makespan,
            "starts": {str(k): v for k, v in sorted(self.starts.items())},
            "completions": {str(k): v for k, v in sorted(self.completions.items())},
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "active_memory"])
            for t, m in self.memory_trace:
                writer.writerow([repr(t), repr(m)])

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)

    def memory_integral(self) -> float:
        total = 0.0
        for (t0, m0), (t1, _) in zip(self.memory_trace, self.memory_trace[1:]):
            total += m0 * (t1 - t0)
        return total


def _check(table: TaskTable, order: Sequence[int], K: int) -> np.ndarray:
    if int(K) != K or K < 1:
        raise ValueError(f"concurrency budget K must be an integer >= 1, got {K!r}")
    return as_permutation(order, table.n) - 1


def list_schedule(table: TaskTable, order: Sequence[int], K: int) -> ScheduleTrace:
    """Simulate ``order`` (1-based task ids) on ``K`` workers."""
    perm = _check(table, order, K)
    mem = table.memories().tolist()
    dur = table.durations()
    starts, comps = kernels.list_schedule_times(dur, perm, K)
    n = len(perm)
    # sum active sets in position order, like the kernels, so the trace
    # maximum is bit-identical to peak_memory()
    times = sorted(set(starts) | set(comps))
    trace = []
    for t in times:
        total = 0.0
        for i in range(n):
            if starts[i] <= t < comps[i]:
                total += mem[perm[i]]
        trace.append((t, total))
    peak = max(m for _, m in trace)
    return ScheduleTrace(
        starts={int(perm[j]) + 1: starts[j] for j in range(n)},
        completions={int(perm[j]) + 1: comps[j] for j in range(n)},
        memory_trace=trace,
        peak=peak,
        makespan=max(comps),
    )


def peak_memory(table: TaskTable, order: Sequence[int], K: int) -> float:
    """Peak of the active-memory step function; evaluated at start events."""
    perm = _check(table, order, K)
    return kernels.peak_memory(table.memories(), table.durations(), perm, K)


def sequential_order(n: int) -> list[int]:
    return list(range(1, n + 1))
