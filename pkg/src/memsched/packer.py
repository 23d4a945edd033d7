"""Batch selection under an available-RAM capacity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from . import kernels


@dataclass(frozen=True)
class PackingProblem:
    items: tuple[tuple[int, float], ...]
    capacity: float

    def __post_init__(self):
        ids = [i for i, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be distinct")
        for i, w in self.items:
            if not w > 0:
                raise ValueError(f"item {i}: predicted RAM must be positive, got {w!r}")
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")

    @classmethod
    def of(cls, items: Iterable[tuple[int, float]], capacity: float) -> "PackingProblem":
        return cls(tuple((int(i), float(w)) for i, w in items), float(capacity))


def greedy_pack(problem: PackingProblem) -> set[int]:
    """Smallest predictions first until the next one does not fit.

    This prefix is a maximum-cardinality feasible subset.
    """
    chosen = set()
    total = 0.0
    for task, w in sorted(problem.items, key=lambda it: (it[1], it[0])):
        if total + w > problem.capacity:
            break
        chosen.add(task)
        total += w
    return chosen


# relative slack when rounding: float noise such as 50.00000000000001 from a
# refit must not cost a whole quantum
QUANT_RTOL = 1e-9


def quantize(weight: float, quantum: float) -> int:
    """Round up to a whole number of quanta (keeps selections feasible up to
    a relative ``QUANT_RTOL``)."""
    target = weight * (1.0 - QUANT_RTOL)
    q = max(math.ceil(target / quantum), 1)
    # division noise can land one quantum off either way
    if q > 1 and (q - 1) * quantum >= target:
        q -= 1
    while q * quantum < target:
        q += 1
    return q


def knapsack_pack(problem: PackingProblem, quantum: float = 1.0) -> set[int]:
    """Maximize total quantized predicted RAM within capacity.

    Ties on the total go to more items, then to the lexicographically
    smallest id set.
    """
    if quantum <= 0:
        raise ValueError("quantum must be positive")
    items = sorted(problem.items)
    weights = [quantize(w, quantum) for _, w in items]
    cap_units = math.floor(problem.capacity / quantum)
    if (cap_units + 1) * quantum <= problem.capacity:
        cap_units += 1
    if cap_units <= 0 or not items:
        return set()
    _, mask = kernels.knapsack_mask(weights, cap_units)
    return {items[k][0] for k in range(len(items)) if mask >> k & 1}


def quantized_total(problem: PackingProblem, chosen: Iterable[int], quantum: float = 1.0) -> int:
    weights = dict(problem.items)
    return sum(quantize(weights[i], quantum) for i in chosen)
