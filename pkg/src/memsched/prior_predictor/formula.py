"""Formula files: expression + constants + standardizer + conformal map."""
from __future__ import annotations

import json
from importlib import resources
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from ..workload import make_rng
from .calibration import ConformalMap, Standardizer, fit_conformal
from .expr import EPS, EXP_CLAMP, SENTINEL, BEAGLE_EXPR, Node, Bin, Call, Const, Neg, Num, Var, \
    constants, eval_expr, parse_expr
from .synthetic import FeatureVector, gen_synthetic_beagle

FLOOR_MB = 1.0
FIT_STREAM = 8


@dataclass(frozen=True)
class Formula:
    expression: str
    constants: Mapping[str, float]
    standardizer: Standardizer
    conformal: ConformalMap | None = None

    def __post_init__(self):
        missing = constants(self.tree) - set(self.constants)
        if missing:
            raise ValueError(f"formula leaves constants unbound: {sorted(missing)}")

    @property
    def tree(self) -> Node:
        return parse_expr(self.expression)

    def raw_mb(self, x: FeatureVector) -> float:
        """Inverse-scaled prediction before the conformal adjustment."""
        z = self.standardizer.standardize(x.as_array())
        return self.standardizer.inverse_label(eval_expr(self.tree, z, self.constants))

    def raw_mb_batch(self, X) -> np.ndarray:
        Z = self.standardizer.standardize(np.asarray(X, dtype=np.float64))
        return self.standardizer.inverse_label(eval_batch(self.tree, Z, self.constants))

    def to_dict(self) -> dict:
        d = {"expression": self.expression,
             "constants": {k: float(v) for k, v in sorted(self.constants.items())},
             "standardizer": self.standardizer.to_dict()}
        if self.conformal is not None:
            d["conformal"] = self.conformal.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Formula":
        for key in ("expression", "constants", "standardizer"):
            if key not in d:
                raise ValueError(f"formula file lacks {key!r}")
        conf = ConformalMap.from_dict(d["conformal"]) if d.get("conformal") else None
        return cls(d["expression"], {k: float(v) for k, v in d["constants"].items()},
                   Standardizer.from_dict(d["standardizer"]), conf)

    def with_conformal(self, cmap: ConformalMap) -> "Formula":
        return Formula(self.expression, dict(self.constants), self.standardizer, cmap)


def example_formula_path():
    """The shipped synthetic example (see scripts/make_example_formula.py)."""
    return resources.files("memsched") / "data" / "beagle_example.json"


def load_formula(path=None) -> Formula:
    if path is None:
        path = example_formula_path()
    with open(path, encoding="utf-8") as fh:
        return Formula.from_dict(json.load(fh))


def save_formula(formula: Formula, path, header: dict | None = None) -> None:
    payload = formula.to_dict()
    if header:
        payload = {"_config": header} | payload
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def conservative_prior(formula: Node | str, std: Standardizer, cmap: ConformalMap,
                       x: FeatureVector, consts: Mapping[str, float] | None = None) -> float:
    """cmap(inverse_label(g(standardize(x)))), at least 1 MB."""
    tree = parse_expr(formula) if isinstance(formula, str) else formula
    y_hat = std.inverse_label(eval_expr(tree, std.standardize(x.as_array()), consts))
    return max(float(cmap(y_hat)), FLOOR_MB)


def formula_prior(formula: Formula, x: FeatureVector) -> float:
    if formula.conformal is None:
        raise ValueError("formula has no conformal map; run calibrate first")
    return conservative_prior(formula.tree, formula.standardizer, formula.conformal, x, formula.constants)


# -- vectorized evaluation (used for fitting) --------------------------------

def eval_batch(node: Node, Z: np.ndarray, consts: Mapping[str, float] | None = None) -> np.ndarray:
    """Row-wise :func:`eval_expr` with the same guards, on an (m, 8) array."""
    consts = consts or {}
    Z = np.atleast_2d(Z)
    with np.errstate(all="ignore"):
        return np.broadcast_to(_batch(node, Z, consts), (Z.shape[0],)).astype(np.float64)


def _batch(node, Z, consts):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return Z[:, node.index]
    if isinstance(node, Const):
        return np.float64(consts[node.name])
    if isinstance(node, Neg):
        return -_batch(node.arg, Z, consts)
    if isinstance(node, Call):
        u = _batch(node.arg, Z, consts)
        if node.fn == "abs":
            return np.abs(u)
        if node.fn == "exp":
            return np.exp(np.minimum(u, EXP_CLAMP))
        if node.fn == "log":
            return np.log(np.abs(u) + EPS)
        if node.fn == "sqrt":
            return np.sqrt(np.abs(u))
        return np.where(u > -1.0, np.log1p(np.maximum(u, -1.0 + 1e-300)), np.log(np.abs(1.0 + u) + EPS))
    a = _batch(node.left, Z, consts)
    b = _batch(node.right, Z, consts)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    small = np.abs(b) < EPS
    sentinel = np.where(a == 0, 0.0, np.copysign(SENTINEL, a) * np.copysign(1.0, b))
    return np.where(small, sentinel, a / np.where(small, 1.0, b))


def fit_constants(tree: Node, Z: np.ndarray, y_tilde: np.ndarray, starts: int = 8,
                  seed: int = 0) -> tuple[dict[str, float], float]:
    """Least-squares constants for a fixed expression (multi-start)."""
    names = sorted(constants(tree), key=lambda s: int(s[1:]))
    rng = make_rng(seed, FIT_STREAM)
    best, best_cost = None, np.inf

    def resid(c):
        r = eval_batch(tree, Z, dict(zip(names, c))) - y_tilde
        return np.nan_to_num(r, nan=1e6, posinf=1e6, neginf=-1e6)

    for _ in range(starts):
        c0 = rng.normal(0.0, 1.0, len(names))
        sol = least_squares(resid, c0, method="trf", max_nfev=2000)
        cost = float(np.mean(sol.fun ** 2))
        if cost < best_cost:
            best, best_cost = sol.x, cost
    return dict(zip(names, map(float, best))), best_cost


def fit_example_formula(n_train: int = 4000, n_cal: int = 2000, alpha: float = 0.2,
                        seed: int = 0, starts: int = 8) -> Formula:
    """Beagle-form formula fitted to synthetic runs, then calibrated on a
    disjoint split."""
    data = gen_synthetic_beagle(n_train + n_cal, seed)
    X = np.array([x.as_array() for x, _ in data])
    y = np.array([v for _, v in data])
    std = Standardizer.from_data(X[:n_train], y[:n_train])
    tree = parse_expr(BEAGLE_EXPR)
    consts, _ = fit_constants(tree, std.standardize(X[:n_train]), std.standardize_label(y[:n_train]),
                              starts=starts, seed=seed)
    base = Formula(BEAGLE_EXPR, consts, std)
    y_hat = base.raw_mb_batch(X[n_train:])
    return base.with_conformal(fit_conformal(np.column_stack([y_hat, y[n_train:]]), alpha))


def coverage(formula: Formula, data: Sequence[tuple[FeatureVector, float]]) -> float:
    """Fraction of true values at or below the conservative prior."""
    hits = sum(1 for x, y in data if y <= formula_prior(formula, x))
    return hits / len(data)
