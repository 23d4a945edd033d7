"""Synthetic stand-in for measured Beagle runs.

Feature ranges (all drawn independently)::

    Thr    threads          {1, 2, 4, 8, 16, 32}
    Burn   burn-in          integer in [1, 6]
    Iter   iterations       integer in [6, 18]
    Win    window (cM)      uniform [10, 60]
    V      variants         log-uniform [1e4, 1e7]
    S      samples          log-uniform [1e3, 1e4]
    V_ref  ref variants     log-uniform [1e5, 1e7]
    S_ref  ref samples      log-uniform [500, 2500]

Ground-truth peak RAM in MB::

    y = 5000 (V/1e4)^0.5 (S/1e3)^0.7 (V_ref/1e6)^0.1 (S_ref/2500)^0.2
        + 64 Thr + 2 Win

times log-normal noise exp(N(0, noise)). With the reference panel at
(1e6, 2500), one thread and Win=40, y runs from about 5.1 GB at
(V, S) = (1e4, 1e3) to about 793 GB at (1e7, 1e4).
"""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from ..workload import make_rng

FEATURES = ("Thr", "Burn", "Iter", "Win", "V", "S", "V_ref", "S_ref")
SYNTH_STREAM = 7


@dataclass(frozen=True)
class FeatureVector:
    Thr: float
    Burn: float
    Iter: float
    Win: float
    V: float
    S: float
    V_ref: float
    S_ref: float

    def __post_init__(self):
        for name, v in zip(FEATURES, astuple(self)):
            if not v >= 0:
                raise ValueError(f"{name} must be >= 0, got {v!r}")
        if self.V < 1 or self.S < 1:
            raise ValueError("V and S must be >= 1")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def parse(cls, text: str) -> "FeatureVector":
        """From ``"Thr=4,Burn=3,..."``; every feature must be given once."""
        values = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, sep, val = part.partition("=")
            key = key.strip()
            if not sep or key not in FEATURES:
                raise ValueError(f"bad feature assignment {part!r}")
            if key in values:
                raise ValueError(f"feature {key} given twice")
            values[key] = float(val)
        missing = [f for f in FEATURES if f not in values]
        if missing:
            raise ValueError(f"missing features: {', '.join(missing)}")
        return cls(**values)


def true_ram(x: FeatureVector) -> float:
    core = (5000.0 * (x.V / 1e4) ** 0.5 * (x.S / 1e3) ** 0.7
            * (x.V_ref / 1e6) ** 0.1 * (x.S_ref / 2500.0) ** 0.2)
    return core + 64.0 * x.Thr + 2.0 * x.Win


def _log_uniform(rng, lo, hi, n):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), n))


def gen_synthetic_beagle(n: int, seed: int, noise: float = 0.05) -> list[tuple[FeatureVector, float]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, SYNTH_STREAM)
    thr = rng.choice([1, 2, 4, 8, 16, 32], n)
    burn = rng.integers(1, 7, n)
    it = rng.integers(6, 19, n)
    win = rng.uniform(10, 60, n)
    V = _log_uniform(rng, 1e4, 1e7, n)
    S = _log_uniform(rng, 1e3, 1e4, n)
    V_ref = _log_uniform(rng, 1e5, 1e7, n)
    S_ref = _log_uniform(rng, 500, 2500, n)
    eps = rng.normal(0.0, noise, n) if noise > 0 else np.zeros(n)
    out = []
    for k in range(n):
        x = FeatureVector(float(thr[k]), float(burn[k]), float(it[k]), float(win[k]),
                          float(V[k]), float(S[k]), float(V_ref[k]), float(S_ref[k]))
        out.append((x, true_ram(x) * float(np.exp(eps[k]))))
    return out
