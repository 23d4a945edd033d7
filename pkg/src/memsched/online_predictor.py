"""Online polynomial RAM predictor with a residual-percentile safety margin.

Observations are keyed by task id. Three kinds exist:

* real      -- measured peak RAM after a successful run
* temporary -- ``scale * prediction`` inserted after an overcommit
* prior     -- externally supplied estimate, used until the task runs

All kinds enter the least-squares fit and the residual set. Only real and
temporary observations count as "observed" for the percentile schedule.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular


class InsufficientData(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    task: int
    ram: float
    temporary: bool = False
    prior: bool = False

    def __post_init__(self):
        if not self.ram > 0:
            raise ValueError(f"observed RAM must be positive, got {self.ram!r}")


class InitKind(str, Enum):
    BIGGEST_FIRST = "biggest"
    SMALLEST_FIRST = "smallest"
    BIGGEST_AND_SMALLEST = "both"


@dataclass(frozen=True)
class InitStrategy:
    kind: InitKind = InitKind.SMALLEST_FIRST
    p: int = 2


def init_order(strategy: InitStrategy, n: int) -> list[int]:
    """Task ids run sequentially to warm up the predictor."""
    p = strategy.p
    if p < 1 or p > n:
        raise ValueError(f"init length p must be in 1..{n}, got {p}")
    kind = InitKind(strategy.kind)
    if kind is InitKind.BIGGEST_FIRST:
        return list(range(1, p + 1))
    if kind is InitKind.SMALLEST_FIRST:
        return list(range(n, n - p, -1))
    head = list(range(1, p // 2 + 1))
    return head + list(range(n, n - (p - len(head)), -1))


@dataclass
class PredictorParams:
    degree: int = 1
    gamma_max: float = 0.95
    gamma_min: float = 0.80
    scale: float = 1.30
    floor: float = 1.0
    residuals: str = "stored"

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if not (self.gamma_max >= self.gamma_min >= 0):
            raise ValueError("need gamma_max >= gamma_min >= 0")
        if self.scale < 1:
            raise ValueError("overcommit scale must be >= 1")
        if self.residuals not in ("recompute", "stored"):
            raise ValueError(f"unknown residual mode {self.residuals!r}")


@dataclass
class OnlinePredictor:
    n_total: int
    params: PredictorParams = field(default_factory=PredictorParams)
    observations: dict[int, Observation] = field(default_factory=dict)
    weights: np.ndarray | None = None
    # prediction issued when a task was last launched (for "stored" residuals)
    issued: dict[int, float] = field(default_factory=dict)

    # -- observation bookkeeping -------------------------------------------

    def observe(self, task: int, ram: float) -> None:
        """Record a measured value; replaces any temporary or prior point."""
        self.observations[task] = Observation(task, float(ram))

    def add_prior(self, task: int, ram: float) -> None:
        current = self.observations.get(task)
        if current is not None and not current.prior:
            return
        self.observations[task] = Observation(task, float(ram), prior=True)

    def record_overcommit(self, task: int) -> Observation:
        """Insert ``scale * r_hat`` as the task's temporary point.

        ``r_hat`` is the prediction the failed run was launched with (see
        :meth:`issue`), else the current prediction. Using the launch-time
        value keeps simultaneous failures from inflating each other.
        """
        r_hat = self.issued[task] if task in self.issued else self.predict(task)
        obs = Observation(task, self.params.scale * r_hat, temporary=True)
        self.observations[task] = obs
        self.issued[task] = r_hat
        return obs

    def issue(self, task: int) -> float:
        """Prediction for a task about to run; remembered for its residual."""
        r_hat = self.predict(task)
        self.issued[task] = r_hat
        return r_hat

    def n_observed(self) -> int:
        return sum(1 for o in self.observations.values() if not o.prior)

    # -- model ---------------------------------------------------------------

    def _design(self):
        obs = sorted(self.observations.values(), key=lambda o: o.task)
        c = np.array([o.task for o in obs], dtype=np.float64)
        y = np.array([o.ram for o in obs], dtype=np.float64)
        return c, y

    def fit(self) -> np.ndarray:
        d = self.params.degree
        c, y = self._design()
        if len(c) < d + 1:
            raise InsufficientData(f"degree {d} needs {d + 1} observations, have {len(c)}")
        if len(np.unique(c)) < d + 1:
            raise InsufficientData("design matrix is rank deficient")
        vander = np.vander(c, d + 1, increasing=True)
        q, r = np.linalg.qr(vander)
        self.weights = solve_triangular(r, q.T @ y)
        return self.weights

    @property
    def fitted(self) -> bool:
        return self.weights is not None

    def raw_predict(self, task) -> float:
        if self.weights is None:
            raise InsufficientData("predictor has not been fitted")
        # Horner, highest degree first
        value = 0.0
        for w in self.weights[::-1]:
            value = value * task + w
        return float(value)

    def predict(self, task: int) -> float:
        return max(self.raw_predict(task), self.params.floor)

    def residuals(self) -> np.ndarray:
        """Sorted absolute residuals over the fit set.

        ``recompute``: against the current fit. ``stored``: against the
        prediction issued before the task ran, falling back to the current
        fit for points that never had one (warm-up runs, priors).
        """
        if not self.observations:
            raise InsufficientData("no observations")
        stored = self.params.residuals == "stored"
        out = []
        for o in sorted(self.observations.values(), key=lambda o: o.task):
            if stored and not o.prior and o.task in self.issued:
                ref = self.issued[o.task]
            else:
                ref = self.raw_predict(o.task)
            out.append(abs(ref - o.ram))
        return np.sort(np.array(out))

    def gamma_now(self) -> float:
        frac = self.n_observed() / self.n_total
        return self.params.gamma_max - frac * self.params.gamma_min

    def bias(self, gamma: float | None = None) -> float:
        if gamma is None:
            gamma = self.gamma_now()
        return percentile_bias(self.residuals(), gamma)

    def conservative_predict(self, task: int, use_bias: bool = True) -> float:
        base = self.predict(task)
        return base + self.bias() if use_bias else base

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "degree": self.params.degree,
            "weights": None if self.weights is None else self.weights.tolist(),
            "observations": [asdict(o) for o in sorted(self.observations.values(), key=lambda o: o.task)],
            "params": asdict(self.params) | {"n_total": self.n_total},
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "OnlinePredictor":
        data = json.loads(text)
        params = dict(data["params"])
        n_total = params.pop("n_total")
        pred = cls(n_total=n_total, params=PredictorParams(**params))
        for o in data["observations"]:
            pred.observations[o["task"]] = Observation(**o)
        if data.get("weights") is not None:
            pred.weights = np.asarray(data["weights"], dtype=np.float64)
        return pred


def percentile_bias(sorted_residuals, gamma: float) -> float:
    """Mean of the 1-indexed order statistics at floor/ceil of gamma * N.

    The rank is clamped to [1, N] so small gamma * N stays defined.
    """
    res = np.asarray(sorted_residuals, dtype=np.float64)
    n = len(res)
    if n == 0:
        raise InsufficientData("no residuals")
    # rounding strips float noise such as 0.95 * 20 -> 18.999...
    mu = min(max(round(gamma * n, 9), 1.0), float(n))
    lo, hi = math.floor(mu), math.ceil(mu)
    return float((res[lo - 1] + res[hi - 1]) / 2.0)
