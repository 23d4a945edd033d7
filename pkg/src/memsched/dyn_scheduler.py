"""Dynamic scheduling loop over a simulated execution environment.

The environment draws hidden true RAM/duration per task from a noisy linear
model. The scheduler only sees true RAM after a successful run. A task whose
true RAM exceeds its allocation fails at the end of its run and is requeued.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .online_predictor import InitKind, InitStrategy, OnlinePredictor, PredictorParams, init_order
from .packer import PackingProblem, greedy_pack, knapsack_pack
from .workload import make_rng

TRUTH_STREAM = 1
PRIOR_STREAM = 2


class Unschedulable(RuntimeError):
    """Some task needs more RAM than the machine has."""


@dataclass(frozen=True)
class SimEnvConfig:
    n: int = 22
    total_ram: float = 1000.0
    m: float = -1.0
    c: float = 23.0
    beta_ram: float = 0.10
    beta_dur: float = 0.15
    size_pct: float | None = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.total_ram > 0:
            raise ValueError("total_ram must be positive")
        for name in ("beta_ram", "beta_dur"):
            beta = getattr(self, name)
            if not 0 <= beta < 1:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.size_pct is not None and not self.size_pct > 0:
            raise ValueError("size_pct must be positive")

    def base_values(self) -> np.ndarray:
        """Noise-free m*i + c, rescaled so task 1 is size_pct of total RAM."""
        i = np.arange(1, self.n + 1, dtype=np.float64)
        base = self.m * i + self.c
        if np.any(base <= 0):
            raise ValueError("m*i + c must be positive for every task")
        if self.size_pct is None:
            return base
        target = self.size_pct * self.total_ram / 100.0
        return target * (base / base[0])


@dataclass(frozen=True)
class TaskTruth:
    ram: float
    dur: float


def gen_truth(cfg: SimEnvConfig) -> list[TaskTruth]:
    base = cfg.base_values()
    rng = make_rng(cfg.seed, TRUTH_STREAM)
    u = rng.uniform(-cfg.beta_ram, cfg.beta_ram, cfg.n)
    v = rng.uniform(-cfg.beta_dur, cfg.beta_dur, cfg.n)
    return [TaskTruth(float(b * (1 + ui)), float(b * (1 + vi))) for b, ui, vi in zip(base, u, v)]


def exact_priors(cfg: SimEnvConfig) -> dict[int, float]:
    return {i + 1: t.ram for i, t in enumerate(gen_truth(cfg))}


def noisy_priors(cfg: SimEnvConfig) -> dict[int, float]:
    """True RAM of an independent run of the same pipeline (fresh noise)."""
    base = cfg.base_values()
    rng = make_rng(cfg.seed, PRIOR_STREAM)
    u = rng.uniform(-cfg.beta_ram, cfg.beta_ram, cfg.n)
    return {i + 1: float(b * (1 + ui)) for i, (b, ui) in enumerate(zip(base, u))}


@dataclass(frozen=True)
class SchedulerPolicy:
    packer: str = "knapsack"
    use_bias: bool = True
    init: InitStrategy = field(default_factory=InitStrategy)
    priors: Mapping[int, float] | None = None
    quantum: float = 1.0
    oom_model: str = "task"

    def __post_init__(self):
        if self.packer not in ("knapsack", "greedy"):
            raise ValueError(f"unknown packer {self.packer!r}")
        if self.oom_model not in ("task", "machine"):
            raise ValueError(f"unknown oom_model {self.oom_model!r}")

    def label(self) -> str:
        parts = [self.packer, "bias" if self.use_bias else "nobias"]
        parts.append("prior" if self.priors is not None else f"init-{InitKind(self.init.kind).value}")
        return "+".join(parts)


@dataclass(frozen=True)
class TaskRun:
    task: int
    launch: float
    finish: float
    allocated: float
    true_ram: float
    failed: bool


@dataclass
class RunMetrics:
    makespan: float
    overcommits: int
    utilization_trace: list[tuple[float, float]]
    runs: list[TaskRun]
    exact: bool = True

    def max_allocated(self) -> float:
        return max((a for _, a in self.utilization_trace), default=0.0)


def _check_schedulable(cfg: SimEnvConfig, truths: Sequence[TaskTruth]) -> None:
    for i, t in enumerate(truths, start=1):
        if t.ram > cfg.total_ram:
            raise Unschedulable(f"task {i} needs {t.ram:.3f} MB > total RAM {cfg.total_ram:.3f} MB")


def _record(trace: list, t: float, allocated: float) -> None:
    if trace and trace[-1][0] == t:
        trace[-1] = (t, allocated)
    else:
        trace.append((t, allocated))


def run_dynamic(cfg: SimEnvConfig, policy: SchedulerPolicy,
                params: PredictorParams | None = None) -> RunMetrics:
    """Event-driven simulation of the predict -> pack -> launch loop."""
    params = params or PredictorParams()
    truths = gen_truth(cfg)
    _check_schedulable(cfg, truths)
    n = cfg.n
    pred = OnlinePredictor(n_total=n, params=params)
    # largest allocation the packer can ever place on an idle machine
    q = policy.quantum
    max_alloc = cfg.total_ram if policy.packer == "greedy" else math.floor(cfg.total_ram / q) * q
    if max_alloc <= 0:
        raise ValueError("quantum larger than total RAM")

    runs: list[TaskRun] = []
    trace: list[tuple[float, float]] = []
    pending = set(range(1, n + 1))
    failed_alloc: dict[int, float] = {}
    overcommits = 0
    t = 0.0

    if policy.priors is not None:
        missing = pending - set(policy.priors)
        if missing:
            raise ValueError(f"priors missing for tasks {sorted(missing)}")
        for task in sorted(pending):
            pred.add_prior(task, policy.priors[task])
    else:
        warmup = init_order(policy.init, n)
        if len(warmup) < params.degree + 1:
            raise ValueError("initialization must provide at least degree + 1 observations")
        # each warm-up task runs alone with the whole machine
        for task in warmup:
            truth = truths[task - 1]
            _record(trace, t, cfg.total_ram)
            runs.append(TaskRun(task, t, t + truth.dur, cfg.total_ram, truth.ram, False))
            t += truth.dur
            pred.observe(task, truth.ram)
            pending.discard(task)
        _record(trace, t, 0.0)
    if pending:
        pred.fit()

    def allocation(task: int) -> float:
        alloc = pred.conservative_predict(task, policy.use_bias)
        own = pred.observations.get(task)
        if own is not None:
            alloc = max(alloc, own.ram)
        if task in failed_alloc:
            alloc = max(alloc, params.scale * failed_alloc[task])
        return min(alloc, max_alloc)

    seq = itertools.count()
    running: list[tuple[float, int, float, int, float]] = []  # (finish, seq, launch, task, alloc)
    in_flight: set[int] = set()
    oom_hit: set[int] = set()
    allocated = 0.0

    def mark_oom() -> None:
        # true usage only rises at launches; check it there
        if sum(truths[k - 1].ram for *_, k, _ in running) > cfg.total_ram:
            oom_hit.update(k for *_, k, _ in running)

    def launch() -> None:
        nonlocal allocated
        waiting = sorted(pending - in_flight)
        if not waiting:
            return
        avail = cfg.total_ram - sum(a for *_, a in running)
        problem = PackingProblem.of(((task, allocation(task)) for task in waiting), max(avail, 0.0))
        chosen = knapsack_pack(problem, q) if policy.packer == "knapsack" else greedy_pack(problem)
        weights = dict(problem.items)
        for task in sorted(chosen):
            pred.issue(task)
            truth = truths[task - 1]
            heapq.heappush(running, (t + truth.dur, next(seq), t, task, weights[task]))
            in_flight.add(task)
        allocated = sum(a for *_, a in running)
        _record(trace, t, allocated)
        if chosen:
            mark_oom()

    launch()
    while running:
        finish, _, started, task, alloc = heapq.heappop(running)
        t = finish
        truth = truths[task - 1]
        in_flight.discard(task)
        failed = truth.ram > alloc
        if policy.oom_model == "machine":
            failed = failed and task in oom_hit
        oom_hit.discard(task)
        runs.append(TaskRun(task, started, finish, alloc, truth.ram, failed))
        if failed:
            overcommits += 1
            pred.record_overcommit(task)
            failed_alloc[task] = alloc
        else:
            pred.observe(task, truth.ram)
            pending.discard(task)
        pred.fit()
        # drain simultaneous completions before packing again
        if running and running[0][0] == t:
            continue
        allocated = sum(a for *_, a in running)
        _record(trace, t, allocated)
        launch()
        if pending and not running:
            raise RuntimeError("scheduler stalled with pending tasks")

    makespan = max((r.finish for r in runs), default=0.0)
    return RunMetrics(makespan, overcommits, trace, runs)


def run_naive(cfg: SimEnvConfig) -> RunMetrics:
    """One task at a time, in id order, each with the whole machine."""
    truths = gen_truth(cfg)
    _check_schedulable(cfg, truths)
    t = 0.0
    runs, trace = [], []
    for task, truth in enumerate(truths, start=1):
        _record(trace, t, cfg.total_ram)
        runs.append(TaskRun(task, t, t + truth.dur, cfg.total_ram, truth.ram, False))
        t += truth.dur
    _record(trace, t, 0.0)
    return RunMetrics(t, 0, trace, runs)


# -- offline (perfect-information) schedules ---------------------------------

_TOL = 1e-9


def _earliest_start(placed, ram, k, d, capacity) -> float:
    """Earliest time task ``k`` fits for its whole duration next to ``placed``
    (a list of (start, end, task))."""
    for s in sorted({0.0} | {e for _, e, _ in placed}):
        e = s + d
        # usage only rises at starts, so check s and every start inside (s, e)
        points = [s] + [ps for ps, _, _ in placed if s < ps < e]
        if all(sum(ram[j] for ps, pe, j in placed if ps <= p < pe) + ram[k] <= capacity + _TOL
               for p in points):
            return s
    raise RuntimeError("no feasible start found")  # pragma: no cover - the last end always fits


def serial_schedule(ram: Sequence[float], dur: Sequence[float], capacity: float,
                    order: Sequence[int]) -> list[float]:
    """Serial schedule generation: each task in ``order`` (0-based) starts at
    the earliest time its RAM fits for its whole duration. Returns starts."""
    starts = [0.0] * len(ram)
    placed: list[tuple[float, float, int]] = []
    for k in order:
        if ram[k] > capacity + _TOL:
            raise Unschedulable("task larger than capacity")
        s = _earliest_start(placed, ram, k, dur[k], capacity)
        starts[k] = s
        placed.append((s, s + dur[k], k))
    return starts


def _makespan(starts, dur) -> float:
    return max(s + d for s, d in zip(starts, dur))


def _event_list_schedule(ram, dur, capacity, choose) -> float:
    """Non-delay schedule: at each event, start ``choose(waiting, avail)``."""
    n = len(ram)
    waiting = set(range(n))
    running: list[tuple[float, int]] = []
    t = 0.0
    end = 0.0
    while waiting or running:
        avail = capacity - sum(ram[k] for _, k in running)
        for k in choose(sorted(waiting), avail):
            heapq.heappush(running, (t + dur[k], k))
            waiting.discard(k)
            end = max(end, t + dur[k])
        if not running:
            raise Unschedulable("task larger than capacity")
        t = running[0][0]
        while running and running[0][0] == t:
            heapq.heappop(running)
    return end


def heuristic_bound(ram: Sequence[float], dur: Sequence[float], capacity: float) -> float:
    """Best of oracle knapsack list scheduling and longest-duration-first."""
    def knap(waiting, avail):
        prob = PackingProblem.of(((k + 1, ram[k]) for k in waiting), max(avail, 0.0))
        return [k - 1 for k in knapsack_pack(prob, quantum=_fine_quantum(capacity))]

    def ldf(waiting, avail):
        chosen = []
        for k in sorted(waiting, key=lambda k: (-dur[k], k)):
            if ram[k] <= avail + 1e-9:
                chosen.append(k)
                avail -= ram[k]
        return chosen

    lpt_serial = _makespan(serial_schedule(ram, dur, capacity,
                                           sorted(range(len(ram)), key=lambda k: (-dur[k], k))), dur)
    return min(_event_list_schedule(ram, dur, capacity, knap),
               _event_list_schedule(ram, dur, capacity, ldf),
               lpt_serial)


def _fine_quantum(capacity: float) -> float:
    return capacity / 10000.0


def _dual_feasible_functions():
    """Maps of RAM fractions that keep every feasible set feasible; each one
    turns the area bound into a (possibly tighter) valid bound."""
    def u(k):
        def f(x):
            y = (k + 1) * x
            return x if abs(y - round(y)) < 1e-12 else math.floor(y) / k
        return f

    def cut(e):
        return lambda x: 1.0 if x > 1 - e + 1e-12 else (0.0 if x < e - 1e-12 else x)

    return [lambda x: x, u(2), u(3), u(4), cut(0.5), cut(0.4), cut(0.3)]


def optimal_makespan(ram: Sequence[float], dur: Sequence[float], capacity: float,
                     upper: float | None = None) -> float:
    """Exact minimum makespan under a single RAM capacity (no preemption).

    Depth-first search over serial schedule-generation lists. Some optimal
    schedule is active, and an active schedule is reproduced by placing its
    tasks in (start, id) order at their earliest feasible start; so only
    lists whose starts are non-decreasing (ids increasing on ties) are
    explored.
    """
    n = len(ram)
    if any(r > capacity + _TOL for r in ram):
        raise Unschedulable("task larger than capacity")
    ram = [float(r) for r in ram]
    dur = [float(d) for d in dur]
    best = heuristic_bound(ram, dur, capacity) if upper is None else float(upper)
    best = [best * (1 + 1e-12) + 1e-12]
    weights = [[f(min(r / capacity, 1.0)) for r in ram] for f in _dual_feasible_functions()]
    placed: list[tuple[float, float, int]] = []  # (start, end, task)
    seen: dict[tuple, float] = {}

    def area_bound(L, rem):
        # earliest T by which the free area after L holds the remaining work
        cuts = sorted({L} | {x for s, e, _ in placed for x in (s, e) if x > L})
        out = L
        for w in weights:
            need = sum(w[k] * dur[k] for k in rem)
            acc, T = 0.0, None
            for a, b in zip(cuts, cuts[1:]):
                free = max(1.0 - sum(w[j] for s, e, j in placed if s <= a < e), 0.0)
                if acc + free * (b - a) >= need:
                    T = a + (need - acc) / free if free > 0 else b
                    break
                acc += free * (b - a)
            if T is None:
                T = cuts[-1] + (need - acc)
            out = max(out, T)
        return out

    def search(rem_mask, L, cur, last):
        if rem_mask == 0:
            best[0] = min(best[0], cur)
            return
        key = (rem_mask, last, tuple(sorted((round(e - L, 9), k) for _, e, k in placed if e > L)))
        prev = seen.get(key)
        if prev is not None and prev <= L + _TOL:
            return
        seen[key] = L
        rem = [k for k in range(n) if rem_mask >> k & 1]
        est = {k: _earliest_start(placed, ram, k, dur[k], capacity) for k in rem}
        # starts only grow as tasks are added, so est bounds every completion
        lb = max([cur] + [max(est[k], L) + dur[k] for k in rem])
        if lb >= best[0] or area_bound(L, rem) >= best[0]:
            return
        for k in sorted(rem, key=lambda k: (est[k], -ram[k] * dur[k], k)):
            s = est[k]
            if s < L - _TOL or (s <= L + _TOL and last is not None and k < last):
                continue
            placed.append((s, s + dur[k], k))
            search(rem_mask & ~(1 << k), s, max(cur, s + dur[k]), k)
            placed.pop()

    search((1 << n) - 1, 0.0, 0.0, None)
    return best[0]


def run_theoretical(cfg: SimEnvConfig, exact_limit: int = 12) -> RunMetrics:
    """Perfect-information lower reference.

    Exact for ``n <= exact_limit``; otherwise the best heuristic schedule is
    reported with ``exact=False`` (an upper bound on the optimum).
    """
    truths = gen_truth(cfg)
    _check_schedulable(cfg, truths)
    ram = [t.ram for t in truths]
    dur = [t.dur for t in truths]
    if cfg.n <= exact_limit:
        makespan = optimal_makespan(ram, dur, cfg.total_ram)
        exact = True
    else:
        makespan = heuristic_bound(ram, dur, cfg.total_ram)
        exact = False
    return RunMetrics(makespan, 0, [], [], exact=exact)


def random_feasible_makespans(ram, dur, capacity, count: int, rng: np.random.Generator) -> np.ndarray:
    """Makespans of serial schedules for ``count`` random task orders."""
    n = len(ram)
    return np.array([_makespan(serial_schedule(ram, dur, capacity, rng.permutation(n).tolist()), dur)
                     for _ in range(count)])


def with_size(cfg: SimEnvConfig, size_pct: float, seed: int | None = None) -> SimEnvConfig:
    return replace(cfg, size_pct=size_pct, seed=cfg.seed if seed is None else seed)
