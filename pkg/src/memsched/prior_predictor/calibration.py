"""Feature/label standardization and a monotone one-sided conformal map."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import isotonic_regression

MIN_PAIRS = 20


@dataclass(frozen=True)
class Standardizer:
    mu_x: tuple[float, ...]
    sigma_x: tuple[float, ...]
    mu_y: float
    sigma_y: float

    def __post_init__(self):
        if len(self.mu_x) != len(self.sigma_x):
            raise ValueError("mu_x and sigma_x lengths differ")
        for k, s in enumerate(self.sigma_x):
            if not s > 0:
                raise ValueError(f"sigma_x[{k}] must be positive, got {s!r}")
        if not self.sigma_y > 0:
            raise ValueError(f"sigma_y must be positive, got {self.sigma_y!r}")

    @classmethod
    def from_data(cls, X, y) -> "Standardizer":
        """Training-set statistics (population standard deviation)."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return cls(tuple(X.mean(axis=0).tolist()), tuple(X.std(axis=0).tolist()),
                   float(y.mean()), float(y.std()))

    def standardize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.mu_x):
            raise ValueError(f"expected {len(self.mu_x)} features, got {x.shape[-1]}")
        return (x - np.asarray(self.mu_x)) / np.asarray(self.sigma_x)

    def standardize_label(self, y):
        return (np.asarray(y, dtype=np.float64) - self.mu_y) / self.sigma_y

    def inverse_label(self, y_tilde):
        out = np.asarray(y_tilde, dtype=np.float64) * self.sigma_y + self.mu_y
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"mu_x": list(self.mu_x), "sigma_x": list(self.sigma_x),
                "mu_y": self.mu_y, "sigma_y": self.sigma_y}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(tuple(map(float, d["mu_x"])), tuple(map(float, d["sigma_x"])),
                   float(d["mu_y"]), float(d["sigma_y"]))


@dataclass(frozen=True)
class ConformalMap:
    """Piecewise-linear map from raw to conservative predictions.

    Flat below the first knot; above the last knot the final segment's
    slope is continued.
    """
    knots: tuple[tuple[float, float], ...]
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not self.knots:
            raise ValueError("conformal map needs at least one knot")
        xs = [k[0] for k in self.knots]
        ys = [k[1] for k in self.knots]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knot predictions must be strictly increasing")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValueError("adjusted values must be non-decreasing")

    @classmethod
    def identity(cls, lo: float, hi: float, alpha: float = 0.2) -> "ConformalMap":
        return cls(((float(lo), float(lo)), (float(hi), float(hi))), alpha)

    def __call__(self, y_hat):
        xs = np.array([k[0] for k in self.knots])
        ys = np.array([k[1] for k in self.knots])
        v = np.asarray(y_hat, dtype=np.float64)
        out = np.interp(v, xs, ys)
        if len(xs) > 1:
            slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(v > xs[-1], ys[-1] + slope * (v - xs[-1]), out)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "knots": [list(k) for k in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "ConformalMap":
        return cls(tuple((float(a), float(b)) for a, b in d["knots"]), float(d["alpha"]))


def conformal_quantile(values: Sequence[float], alpha: float) -> float:
    """Order statistic ceil((m + 1)(1 - alpha)) of m values, capped at the max."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    m = len(v)
    k = min(math.ceil(round((m + 1) * (1 - alpha), 9)), m)
    return float(v[max(k, 1) - 1])


def fit_conformal(pairs, alpha: float, bins: int | None = None) -> ConformalMap:
    """Binned (1 - alpha) quantiles of y against predicted y, made monotone.

    ``pairs`` is a sequence of (y_hat, y). Bins are contiguous in y_hat with
    near-equal counts; each contributes the knot (median y_hat, quantile of y).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    n = len(arr)
    if n < MIN_PAIRS:
        raise ValueError(f"insufficient calibration data: {n} pairs, need {MIN_PAIRS}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("calibration pairs must be finite")
    arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
    if bins is None:
        bins = max(4, n // 25)
    bins = min(bins, n)
    xs, ys, ws = [], [], []
    for chunk in np.array_split(arr, bins):
        xs.append(float(np.median(chunk[:, 0])))
        ys.append(conformal_quantile(chunk[:, 1], alpha))
        ws.append(len(chunk))
    # bins sharing a median prediction collapse to their weighted mean first
    merged: list[list[float]] = []
    for x, y, w in zip(xs, ys, ws):
        if merged and merged[-1][0] == x:
            px, py, pw = merged[-1]
            merged[-1] = [x, (py * pw + y * w) / (pw + w), pw + w]
        else:
            merged.append([x, y, w])
    kx = [m[0] for m in merged]
    fitted = isotonic_regression([m[1] for m in merged], weights=[m[2] for m in merged]).x
    # guard against float jitter in the pooled means
    fitted = np.maximum.accumulate(fitted)
    return ConformalMap(tuple(zip(kx, map(float, fitted))), alpha)
