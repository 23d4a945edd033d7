"""Experiment sweeps and their CSV/JSON outputs."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .dyn_scheduler import (SchedulerPolicy, SimEnvConfig, Unschedulable, exact_priors, noisy_priors,
                            run_dynamic, run_naive, run_theoretical)
from .online_predictor import InitKind, InitStrategy, PredictorParams
from .simulator import peak_memory, sequential_order
from .static_opt import optimize_orders
from .workload import TaskTable

TABLE1_SEQUENTIAL = {2: 492.45, 3: 690.47, 4: 881.63, 5: 1062.54, 6: 1233.66,
                     7: 1392.80, 8: 1539.16, 9: 1680.37, 10: 1815.91}
TABLE1_COLUMNS = ["K", "sequential_peak", "optimized_peak", "decrease_pct"]
ABLATION_COLUMNS = ["panel", "policy", "size_pct", "seeds", "mean_makespan", "mean_overcommits"]
METRICS_COLUMNS = ["seed", "policy", "size_pct", "makespan", "overcommits"]
PANELS = ("packer", "bias", "init", "priors")


class SchemaError(ValueError):
    pass


# -- CSV with a config header ------------------------------------------------

def config_header(command: str, config: dict) -> str:
    body = json.dumps({"command": command, "version": __version__} | config, sort_keys=True)
    return f"# memsched {body}"


def write_csv(path_or_buf, columns: Sequence[str], rows: Iterable[Sequence], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(header + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    text = buf.getvalue()
    if path_or_buf is not None:
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


def _cell(v):
    if isinstance(v, float):
        return repr(round(v, 6))
    return v


def read_csv(path) -> tuple[list[str], list[dict[str, str]]]:
    """Rows of a CSV, skipping ``#`` comment lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows


# -- Table 1 -----------------------------------------------------------------

def run_table1(table: TaskTable, ks: Sequence[int] = range(2, 11), iters: int = 20000,
               max_swaps: int = 4, restarts: int = 10, seed: int = 0, workers: int = 1) -> list[list]:
    catalog = optimize_orders(table, ks, iters=iters, max_swaps=max_swaps, restarts=restarts,
                              seed=seed, workers=workers)
    return [[K, c["sequential_peak"], c["peak"], c["decrease_pct"]] for K, c in sorted(catalog.items())]


def check_table1(rows: Sequence[Sequence]) -> list[str]:
    """Problems found, empty when every row meets the reproduction targets."""
    problems = []
    for K, seq, opt, dec in rows:
        ref = TABLE1_SEQUENTIAL.get(int(K))
        if ref is not None and abs(seq - ref) > 0.01:
            problems.append(f"K={K}: sequential peak {seq:.4f} differs from {ref}")
        if dec < 20.0:
            problems.append(f"K={K}: decrease {dec:.2f}% below 20%")
    return problems


# -- dynamic sweeps ----------------------------------------------------------

def _policy(name: str, cfg: SimEnvConfig) -> SchedulerPolicy | str:
    """Named policies used by the ablation panels."""
    if name in ("naive", "theoretical"):
        return name
    smallest = InitStrategy(InitKind.SMALLEST_FIRST)
    table = {
        "knapsack": lambda: SchedulerPolicy("knapsack", True, smallest),
        "greedy": lambda: SchedulerPolicy("greedy", True, smallest),
        "bias": lambda: SchedulerPolicy("knapsack", True, smallest),
        "nobias": lambda: SchedulerPolicy("knapsack", False, smallest),
        "init-smallest": lambda: SchedulerPolicy("knapsack", True, smallest),
        "init-biggest": lambda: SchedulerPolicy("knapsack", True, InitStrategy(InitKind.BIGGEST_FIRST)),
        "init-both": lambda: SchedulerPolicy("knapsack", True, InitStrategy(InitKind.BIGGEST_AND_SMALLEST)),
        "no-prior": lambda: SchedulerPolicy("knapsack", True, smallest),
        "exact-prior": lambda: SchedulerPolicy("knapsack", True, smallest, priors=exact_priors(cfg)),
        "noisy-prior": lambda: SchedulerPolicy("knapsack", True, smallest, priors=noisy_priors(cfg)),
    }
    if name not in table:
        raise ValueError(f"unknown policy {name!r}")
    return table[name]()


PANEL_POLICIES = {
    "packer": ("knapsack", "greedy", "naive", "theoretical"),
    "bias": ("bias", "nobias"),
    "init": ("init-smallest", "init-biggest", "init-both"),
    "priors": ("no-prior", "exact-prior", "noisy-prior"),
}


def run_one(policy_name: str, cfg: SimEnvConfig, params: PredictorParams | None = None):
    """(makespan, overcommits) or None when the instance is unschedulable."""
    try:
        pol = _policy(policy_name, cfg)
        if pol == "naive":
            m = run_naive(cfg)
        elif pol == "theoretical":
            m = run_theoretical(cfg)
        else:
            m = run_dynamic(cfg, pol, params)
    except Unschedulable:
        return None
    return m.makespan, m.overcommits


def _job(args):
    policy, cfg, params = args
    return policy, cfg.size_pct, cfg.seed, run_one(policy, cfg, params)


def sweep(policies: Sequence[str], sizes: Sequence[float], seeds: Sequence[int],
          base: SimEnvConfig | None = None, params: PredictorParams | None = None,
          workers: int = 1) -> dict[tuple[str, float], dict[int, tuple[float, int]]]:
    """Per (policy, size) the per-seed outcomes; seeds are paired across policies."""
    base = base or SimEnvConfig()
    jobs = [(p, replace(base, size_pct=float(s), seed=int(sd)), params)
            for p in policies for s in sizes for sd in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=16))
    else:
        results = [_job(j) for j in jobs]
    out: dict = {}
    for policy, size, seed, res in sorted(results, key=lambda r: (r[0], r[1], r[2])):
        bucket = out.setdefault((policy, size), {})
        if res is not None:
            bucket[seed] = res
    return out


def run_ablation(sizes: Sequence[float], seeds: Sequence[int], panels: Sequence[str] = PANELS,
                 base: SimEnvConfig | None = None, params: PredictorParams | None = None,
                 workers: int = 1) -> list[list]:
    """Rows of ``ABLATION_COLUMNS``; cells with no schedulable seed are dropped."""
    for p in panels:
        if p not in PANEL_POLICIES:
            raise ValueError(f"unknown panel {p!r}")
    if not sizes or not seeds:
        raise ValueError("ablation grid must have at least one size and one seed")
    policies = sorted({pol for p in panels for pol in PANEL_POLICIES[p]})
    res = sweep(policies, sizes, seeds, base, params, workers)
    rows = []
    for panel in panels:
        for pol in PANEL_POLICIES[panel]:
            for size in sizes:
                cell = res.get((pol, float(size)), {})
                if not cell:
                    continue
                ms = np.array([v[0] for v in cell.values()])
                oc = np.array([v[1] for v in cell.values()])
                rows.append([panel, pol, float(size), len(cell), float(ms.mean()), float(oc.mean())])
    return rows


def check_ablation(rows: Sequence[Sequence]) -> list[str]:
    """Qualitative orderings the panels should show."""
    by = {(r[0], r[1], float(r[2])): r for r in rows}
    sizes = sorted({float(r[2]) for r in rows})
    problems = []
    for s in sizes:
        k, g = by.get(("packer", "knapsack", s)), by.get(("packer", "greedy", s))
        if k and g and k[4] > g[4]:
            problems.append(f"size {s}: knapsack makespan {k[4]:.2f} > greedy {g[4]:.2f}")
        if s <= 50:
            sm = by.get(("init", "init-smallest", s))
            for other in ("init-biggest", "init-both"):
                o = by.get(("init", other, s))
                if sm and o and sm[4] > o[4]:
                    problems.append(f"size {s}: smallest-first {sm[4]:.2f} > {other} {o[4]:.2f}")
    on = [r[5] for r in rows if r[0] == "bias" and r[1] == "bias"]
    off = [r[5] for r in rows if r[0] == "bias" and r[1] == "nobias"]
    if on and off and not np.mean(on) < np.mean(off):
        problems.append("bias does not reduce overcommits")
    for s in (10.0, 40.0):
        a, b = by.get(("priors", "exact-prior", s)), by.get(("priors", "no-prior", s))
        if a and b and not a[4] < b[4]:
            problems.append(f"size {s}: priors do not reduce makespan")
    return problems


# -- plot data ---------------------------------------------------------------

def emit_plotdata(columns: Sequence[str], rows: Sequence[dict]) -> dict:
    """Series JSON from a table1 or ablation CSV."""
    if not rows:
        raise SchemaError("CSV has no data rows")
    cols = list(columns)
    try:
        if cols == TABLE1_COLUMNS:
            xs = [int(r["K"]) for r in rows]
            series = [{"label": "sequential", "x": xs, "y": [float(r["sequential_peak"]) for r in rows]},
                      {"label": "optimized", "x": xs, "y": [float(r["optimized_peak"]) for r in rows]}]
            # kept beside the series so the CSV round-trip is lossless
            extra = {"decrease_pct": [float(r["decrease_pct"]) for r in rows]}
            return {"kind": "table1", "series": series, "extra": extra}
        if cols == ABLATION_COLUMNS:
            series = []
            keys = sorted({(r["panel"], r["policy"]) for r in rows}, key=_panel_key)
            for panel, pol in keys:
                sel = sorted((r for r in rows if (r["panel"], r["policy"]) == (panel, pol)),
                             key=lambda r: float(r["size_pct"]))
                xs = [float(r["size_pct"]) for r in sel]
                for metric in ("mean_makespan", "mean_overcommits", "seeds"):
                    series.append({"label": f"{panel}/{pol}/{metric}", "x": xs,
                                   "y": [float(r[metric]) for r in sel]})
            return {"kind": "ablation", "series": series}
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"malformed row: {exc}") from None
    raise SchemaError(f"unrecognized columns {cols}")


def _panel_key(key):
    panel, pol = key
    if panel not in PANEL_POLICIES:
        raise SchemaError(f"unknown panel {panel!r}")
    known = PANEL_POLICIES[panel]
    return PANELS.index(panel), known.index(pol) if pol in known else len(known), pol


def plot_series(data: dict, kind: str | None = None) -> list[dict]:
    """Just the plottable series (sequential/optimized for table1, makespans
    for ablation)."""
    kind = kind or data["kind"]
    if kind == "table1":
        return list(data["series"])
    return [s for s in data["series"] if s["label"].endswith("/mean_makespan")]


def plotdata_to_rows(data: dict) -> tuple[list[str], list[list]]:
    """Inverse of :func:`emit_plotdata`."""
    if not isinstance(data, dict) or "series" not in data or "kind" not in data:
        raise SchemaError("plot data needs 'kind' and 'series'")
    by = {s["label"]: s for s in data["series"]}
    if data["kind"] == "table1":
        seq, opt = by["sequential"], by["optimized"]
        dec = data.get("extra", {}).get("decrease_pct")
        if dec is None:
            dec = [100.0 * (a - b) / a for a, b in zip(seq["y"], opt["y"])]
        rows = [[int(k), a, b, c] for k, a, b, c in zip(seq["x"], seq["y"], opt["y"], dec)]
        return TABLE1_COLUMNS, rows
    if data["kind"] == "ablation":
        rows = []
        keys = sorted({tuple(lab.split("/")[:2]) for lab in by}, key=_panel_key)
        for panel, pol in keys:
            b = f"{panel}/{pol}"
            ms, oc, sd = by[f"{b}/mean_makespan"], by[f"{b}/mean_overcommits"], by[f"{b}/seeds"]
            for x, m, o, n in zip(ms["x"], ms["y"], oc["y"], sd["y"]):
                rows.append([panel, pol, float(x), int(n), m, o])
        return ABLATION_COLUMNS, rows
    raise SchemaError(f"unknown plot data kind {data['kind']!r}")


def sequential_peaks(table: TaskTable, ks: Sequence[int]) -> dict[int, float]:
    seq = sequential_order(table.n)
    return {K: peak_memory(table, seq, K) for K in ks}
