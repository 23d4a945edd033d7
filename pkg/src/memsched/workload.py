"""Task universe, size->resource maps and RNG plumbing shared by every module."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# GRCh37 autosome lengths in bp. Assembly inferred from the sequential peaks
# of the reference table (chr1 + chr2 = 492.45 Mbp); not stated at the source.
GRCH37_AUTOSOMES_BP = {
    "chr1": 249_250_621,
    "chr2": 243_199_373,
    "chr3": 198_022_430,
    "chr4": 191_154_276,
    "chr5": 180_915_260,
    "chr6": 171_115_067,
    "chr7": 159_138_663,
    "chr8": 146_364_022,
    "chr9": 141_213_431,
    "chr10": 135_534_747,
    "chr11": 135_006_516,
    "chr12": 133_851_895,
    "chr13": 115_169_878,
    "chr14": 107_349_540,
    "chr15": 102_531_392,
    "chr16": 90_354_753,
    "chr17": 81_195_210,
    "chr18": 78_077_248,
    "chr19": 59_128_983,
    "chr20": 63_025_520,
    "chr21": 48_129_895,
    "chr22": 51_304_566,
}

SEED_ENV = "MEMSCHED_SEED"


class TableError(ValueError):
    """Raised for malformed or invalid task tables."""


@dataclass(frozen=True)
class TaskTable:
    """Immutable, 1-indexed table of task sizes.

    ``lengths[i - 1]`` is the size of task ``i``. ``names`` carries an optional
    human label per task (e.g. the chromosome a rank corresponds to).
    """

    lengths: tuple[float, ...]
    eta: float = 1.0
    names: tuple[str, ...] = field(default=())
    memory_map: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.lengths) < 1:
            raise TableError("task table must contain at least one task")
        for i, length in enumerate(self.lengths, start=1):
            if not (length > 0 and math.isfinite(length)):
                raise TableError(f"task {i}: length must be positive, got {length!r}")
        if self.eta <= 0:
            raise TableError("eta must be positive")
        if self.names and len(self.names) != len(self.lengths):
            raise TableError("names must match lengths")

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def ids(self) -> range:
        return range(1, self.n + 1)

    def length(self, task_id: int) -> float:
        return self.lengths[task_id - 1]

    def durations(self) -> np.ndarray:
        return self.eta * np.asarray(self.lengths, dtype=np.float64)

    def memories(self) -> np.ndarray:
        lengths = np.asarray(self.lengths, dtype=np.float64)
        if self.memory_map is None:
            return lengths
        mem = np.array([self.memory_map(x) for x in self.lengths], dtype=np.float64)
        # the map must keep the size ordering
        order = np.argsort(lengths, kind="stable")
        if np.any(np.diff(mem[order]) < 0):
            raise TableError("memory_map must be monotone non-decreasing")
        return mem


def default_task_table(eta: float = 1.0) -> TaskTable:
    """The 22 GRCh37 autosomes in Mbp, ranked so that task 1 is the largest.

    GRCh37 has two inversions against chromosome numbering (chr20 > chr19 and
    chr22 > chr21); ranking by size keeps ids strictly decreasing in length.
    ``names`` records which chromosome each id stands for.
    """
    ranked = sorted(GRCH37_AUTOSOMES_BP.items(), key=lambda kv: -kv[1])
    return TaskTable(
        lengths=tuple(bp / 1e6 for _, bp in ranked),
        eta=eta,
        names=tuple(name for name, _ in ranked),
    )


def load_task_table(path: str | os.PathLike, eta: float = 1.0) -> TaskTable:
    """Read ``<id><TAB><length>`` rows; ids are renumbered 1..n in file order."""
    lengths = []
    names = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TableError(f"line {lineno}: expected '<id>\\t<length>', got {raw.rstrip()!r}")
            try:
                length = float(parts[1])
            except ValueError:
                raise TableError(f"line {lineno}: invalid length {parts[1]!r}") from None
            if not (length > 0 and math.isfinite(length)):
                raise TableError(f"line {lineno}: length must be positive, got {parts[1]!r}")
            names.append(parts[0].strip())
            lengths.append(length)
    if not lengths:
        raise TableError(f"{path}: task table is empty")
    return TaskTable(lengths=tuple(lengths), eta=eta, names=tuple(names))


def save_task_table(table: TaskTable, path: str | os.PathLike) -> None:
    # repr() keeps the shortest round-tripping decimal form
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# id\tlength_mbp\n")
        for i, length in zip(table.ids, table.lengths):
            fh.write(f"{i}\t{length!r}\n")


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else ``$MEMSCHED_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``; streams never collide."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def as_permutation(order: Sequence[int], n: int) -> np.ndarray:
    """Validate a 1-based ordering and return it as an int64 array."""
    perm = np.asarray(order, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(1, n + 1)):
        raise ValueError(f"not a permutation of 1..{n}: {list(order)!r}")
    return perm

