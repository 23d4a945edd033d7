"""``memsched`` command line.

Every subcommand accepts ``--config FILE.json`` (keys are option names) and
``--seed``; explicit flags override the config file, and ``$MEMSCHED_SEED``
is used when no seed is given. Exit codes: 0 success, 1 validation error,
2 a ``--check`` found the results off target.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import kernels, report
from .dyn_scheduler import (SchedulerPolicy, SimEnvConfig, Unschedulable, exact_priors, noisy_priors,
                            run_dynamic)
from .online_predictor import InitKind, InitStrategy, PredictorParams
from .prior_predictor import ExprError, FeatureVector, fit_conformal, formula_prior, load_formula, save_formula
from .simulator import list_schedule, sequential_order
from .static_opt import load_catalog, optimize_orders, save_catalog
from .workload import TableError, default_task_table, load_task_table, resolve_seed

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    """``"2-10"`` or ``"2,3,4"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    vals = [float(p) for p in str(text).split(",") if p.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in str(text).split(",") if p.strip()]


# -- shared pieces -----------------------------------------------------------

def _resolved(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config", "command")}
    cfg["seed"] = resolve_seed(args.seed)
    return json.loads(json.dumps(cfg, default=str))


def _header(args) -> str:
    return report.config_header(args.command, _resolved(args))


def _emit(args, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table(args):
    return load_task_table(args.table, args.eta) if args.table else default_task_table(args.eta)


def _env(args) -> SimEnvConfig:
    return SimEnvConfig(n=args.n, total_ram=args.total_ram, m=args.m, c=args.c,
                        beta_ram=args.beta_ram, beta_dur=args.beta_dur, seed=resolve_seed(args.seed))


def _params(args) -> PredictorParams:
    return PredictorParams(degree=args.degree, gamma_max=args.gamma_max, gamma_min=args.gamma_min,
                           scale=args.scale, residuals=args.residuals)


def _add_table_opts(p):
    p.add_argument("--table", help="task table TSV (id<TAB>length); default GRCh37 autosomes")
    p.add_argument("--eta", type=float, default=1.0, help="duration per unit length")


def _add_search_opts(p):
    p.add_argument("--iters", type=int, default=20000, help="hill-climb iterations per restart")
    p.add_argument("--max-swaps", "--swaps", dest="max_swaps", type=int, default=4,
                   help="max transpositions per proposal")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--workers", type=int, default=1, help="process pool size")
    p.add_argument("--backend", choices=["compiled", "python"], help="kernel backend override")


def _add_env_opts(p):
    d = SimEnvConfig()
    p.add_argument("--n", type=int, default=d.n, help="number of tasks")
    p.add_argument("--total-ram", type=float, default=d.total_ram, help="machine RAM (MB)")
    p.add_argument("--m", type=float, default=d.m, help="slope of the size model")
    p.add_argument("--c", type=float, default=d.c, help="intercept of the size model")
    p.add_argument("--beta-ram", type=float, default=d.beta_ram, help="RAM noise half-width")
    p.add_argument("--beta-dur", type=float, default=d.beta_dur, help="duration noise half-width")
    p.add_argument("--sizes", type=_float_list, default=[10, 20, 30, 40, 50, 60],
                   help="task-1 size as %% of total RAM, comma separated")
    q = PredictorParams()
    p.add_argument("--degree", type=int, default=q.degree)
    p.add_argument("--gamma-max", type=float, default=q.gamma_max)
    p.add_argument("--gamma-min", type=float, default=q.gamma_min)
    p.add_argument("--scale", type=float, default=q.scale, help="overcommit inflation factor")
    p.add_argument("--residuals", choices=["stored", "recompute"], default=q.residuals)
    p.add_argument("--workers", type=int, default=1, help="process pool size")


# -- commands ----------------------------------------------------------------

def cmd_static_opt(args) -> int:
    catalog = optimize_orders(_table(args), args.k, iters=args.iters, max_swaps=args.max_swaps,
                              restarts=args.restarts, seed=resolve_seed(args.seed), workers=args.workers)
    if args.out:
        save_catalog(catalog, args.out, config=_resolved(args))
    else:
        payload = {"config": _resolved(args), "orders": {str(k): v for k, v in sorted(catalog.items())}}
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    table = _table(args)
    if args.catalog:
        catalog = load_catalog(args.catalog)
        if args.k not in catalog:
            raise UsageError(f"catalog has no order for K={args.k}")
        order = catalog[args.k]["order"]
    elif args.order == "sequential":
        order = sequential_order(table.n)
    else:
        order = _int_list(args.order)
    trace = list_schedule(table, order, args.k)
    header = _header(args)
    if args.trace_csv:
        report.write_csv(args.trace_csv, ["time", "active_memory"], trace.memory_trace, header)
    if args.trace_json:
        with open(args.trace_json, "w", encoding="utf-8") as fh:
            json.dump({"_config": _resolved(args)} | trace.summary(), fh, indent=2)
            fh.write("\n")
    sys.stdout.write(f"{header}\npeak={trace.peak!r}\nmakespan={trace.makespan!r}\n")
    return EXIT_OK


def _custom_policy(args, cfg: SimEnvConfig) -> SchedulerPolicy:
    if args.priors is None:
        priors = None
    elif args.priors == "exact":
        priors = exact_priors(cfg)
    elif args.priors == "noisy":
        priors = noisy_priors(cfg)
    else:
        with open(args.priors, encoding="utf-8") as fh:
            priors = {int(k): float(v) for k, v in json.load(fh).items()}
    return SchedulerPolicy(packer=args.packer, use_bias=args.bias == "on",
                           init=InitStrategy(InitKind(args.init), args.p), priors=priors,
                           quantum=args.quantum, oom_model=args.oom_model)


def cmd_dynamic(args) -> int:
    env = _env(args)
    seeds = list(range(env.seed, env.seed + args.seeds))
    sizes = [args.size_pct] if args.size_pct is not None else args.sizes
    params = _params(args)
    rows = []
    if args.policy:
        for p in args.policy:
            report.run_one(p, replace(env, size_pct=sizes[0]))  # fail early on bad names
        res = report.sweep(args.policy, sizes, seeds, env, params, args.workers)
        for (policy, size), cell in sorted(res.items()):
            for seed, (ms, oc) in sorted(cell.items()):
                rows.append([seed, policy, size, ms, oc])
    else:
        for size in sizes:
            for seed in seeds:
                cfg = replace(env, size_pct=float(size), seed=seed)
                policy = _custom_policy(args, cfg)
                try:
                    m = run_dynamic(cfg, policy, params)
                except Unschedulable:
                    continue
                rows.append([seed, policy.label(), float(size), m.makespan, m.overcommits])
    _emit(args, report.write_csv(None, report.METRICS_COLUMNS, rows, _header(args)))
    return EXIT_OK


def cmd_ablation(args) -> int:
    env = _env(args)
    seeds = list(range(env.seed, env.seed + args.seeds))
    rows = report.run_ablation(args.sizes, seeds, args.panels, env, _params(args), args.workers)
    _emit(args, report.write_csv(None, report.ABLATION_COLUMNS, rows, _header(args)))
    if args.check:
        problems = report.check_ablation(rows)
        for p in problems:
            print(f"check failed: {p}", file=sys.stderr)
        return EXIT_CHECK if problems else EXIT_OK
    return EXIT_OK


def cmd_table1(args) -> int:
    rows = report.run_table1(_table(args), args.k, iters=args.iters, max_swaps=args.max_swaps,
                             restarts=args.restarts, seed=resolve_seed(args.seed), workers=args.workers)
    _emit(args, report.write_csv(None, report.TABLE1_COLUMNS, rows, _header(args)))
    if args.check:
        problems = report.check_table1(rows)
        for p in problems:
            print(f"check failed: {p}", file=sys.stderr)
        return EXIT_CHECK if problems else EXIT_OK
    return EXIT_OK


def cmd_predict(args) -> int:
    formula = load_formula(args.formula)
    x = FeatureVector.parse(args.features)
    if args.raw:
        value = max(formula.raw_mb(x), 1.0)
    else:
        value = formula_prior(formula, x)
    sys.stdout.write(f"{_header(args)}\n{value!r}\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cols, rows = report.read_csv(args.pairs)
    if not {"y_hat", "y"} <= set(cols):
        raise UsageError("pairs CSV needs columns y_hat,y")
    pairs = [(float(r["y_hat"]), float(r["y"])) for r in rows]
    cmap = fit_conformal(pairs, args.alpha, bins=args.bins)
    formula = load_formula(args.formula).with_conformal(cmap)
    save_formula(formula, args.out, header=_resolved(args))
    return EXIT_OK


def cmd_plotdata(args) -> int:
    if args.to_csv:
        with open(args.input, encoding="utf-8") as fh:
            data = json.load(fh)
        cols, rows = report.plotdata_to_rows(data)
        _emit(args, report.write_csv(None, cols, rows, _header(args)))
        return EXIT_OK
    cols, rows = report.read_csv(args.input)
    data = {"_config": _resolved(args)} | report.emit_plotdata(cols, rows)
    _emit(args, json.dumps(data, indent=2) + "\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values (flags override)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default $MEMSCHED_SEED or 0)")

    parser = _Parser(prog="memsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("static-opt", cmd_static_opt, "optimize processing orders for each K and store them")
    _add_table_opts(p)
    _add_search_opts(p)
    p.add_argument("--k", type=_int_list, default=list(range(2, 11)), help="K values, e.g. 2-10")
    p.add_argument("--out", help="catalog JSON path (default stdout)")

    p = add("simulate", cmd_simulate, "list-schedule one order and report peak/makespan")
    _add_table_opts(p)
    p.add_argument("--k", type=int, required=True, help="concurrency budget")
    p.add_argument("--order", default="sequential", help="'sequential' or comma-separated task ids")
    p.add_argument("--catalog", help="take the order for K from a static-opt catalog")
    p.add_argument("--trace-csv", help="write the memory trace (time,active_memory)")
    p.add_argument("--trace-json", help="write starts/completions/peak/makespan")

    p = add("dynamic", cmd_dynamic, "run the dynamic scheduler on simulated environments")
    _add_env_opts(p)
    p.add_argument("--size-pct", type=float, default=None, help="single task size (overrides --sizes)")
    p.add_argument("--packer", choices=["knapsack", "greedy"], default="knapsack")
    p.add_argument("--bias", choices=["on", "off"], default="on")
    p.add_argument("--init", choices=[k.value for k in InitKind], default="smallest")
    p.add_argument("--p", type=int, default=2, help="initialization length")
    p.add_argument("--priors", help="'exact', 'noisy' or a JSON file mapping task id to MB")
    p.add_argument("--quantum", type=float, default=1.0, help="knapsack weight quantum (MB)")
    p.add_argument("--oom-model", choices=["task", "machine"], default="task")
    p.add_argument("--policy", action="append",
                   help="named preset instead of the flags above (repeatable): knapsack, greedy, nobias, "
                        "init-smallest, init-biggest, init-both, exact-prior, noisy-prior, naive, theoretical")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--out", help="metrics CSV path (default stdout)")

    p = add("ablation", cmd_ablation, "policy x size x seed sweep with per-cell means")
    _add_env_opts(p)
    p.add_argument("--seeds", type=int, default=50, help="number of consecutive seeds")
    p.add_argument("--panels", type=_str_list, default=list(report.PANELS))
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--check", action="store_true", help="exit 2 if expected orderings fail")

    p = add("table1", cmd_table1, "sequential vs optimized peak memory for each K")
    _add_table_opts(p)
    _add_search_opts(p)
    p.add_argument("--k", type=_int_list, default=list(range(2, 11)))
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--check", action="store_true", help="exit 2 if reproduction targets fail")

    p = add("predict", cmd_predict, "conservative RAM prior (MB) from a formula file")
    p.add_argument("--formula", help="formula JSON (default: shipped synthetic example)")
    p.add_argument("--features", required=True, help='e.g. "Thr=4,Burn=3,Iter=12,Win=40,V=1e6,S=2000,V_ref=1e6,S_ref=2500"')
    p.add_argument("--raw", action="store_true", help="skip the conformal adjustment")

    p = add("calibrate", cmd_calibrate, "fit the conformal map from (y_hat, y) pairs")
    p.add_argument("--pairs", required=True, help="CSV with columns y_hat,y")
    p.add_argument("--alpha", type=float, default=0.2, help="miscoverage rate")
    p.add_argument("--bins", type=int, default=None, help="default max(4, n // 25)")
    p.add_argument("--formula", help="base formula JSON (default: shipped synthetic example)")
    p.add_argument("--out", required=True, help="output formula JSON")

    p = add("plotdata", cmd_plotdata, "convert a table1/ablation CSV into plot series JSON")
    p.add_argument("input", help="CSV (or JSON with --to-csv)")
    p.add_argument("--to-csv", action="store_true", help="convert plot JSON back to CSV")
    p.add_argument("--out", help="output path (default stdout)")
    return parser, subs


def _prescan(argv, subs) -> tuple[str | None, str | None]:
    """Subcommand and --config value, found before full parsing."""
    command = next((a for a in argv if a in subs), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    return command, config


def _apply_config(path: str, sub: argparse.ArgumentParser, command: str) -> None:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    values = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"unknown config key {key!r} for {command}")
        action = actions[dest]
        if action.type is not None and isinstance(val, str):
            val = action.type(val)
        values[dest] = val
        action.required = False
    sub.set_defaults(**values)


def main(argv=None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        command, config = _prescan(argv, subs)
        if command and config:
            _apply_config(config, subs[command], command)
        args = parser.parse_args(argv)
        if getattr(args, "backend", None):
            kernels.use_backend(args.backend)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, TableError, ExprError, Unschedulable, OSError, KeyError) as exc:
        print(f"memsched: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
