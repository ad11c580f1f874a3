"""Exit-time statistics: Laplace transforms, KS distance to Exp(1), power-law fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _normalized(records) -> np.ndarray:
    vals = []
    for r in records:
        if getattr(r, "cause", None) == "censored":
            continue
        vals.append(r.normalized_tau if hasattr(r, "normalized_tau") else float(r))
    return np.asarray(vals, dtype=float)


def laplace_estimate(records, theta: float) -> tuple[float, float]:
    """Mean of ``exp(-theta * normalized_tau)`` over uncensored records, with jackknife s.e.

    ``records`` may be ExitRecord objects or plain normalized times.
    """
    if not theta > -1:
        raise ValueError("theta must exceed -1")
    x = _normalized(records)
    n = x.size
    if n == 0:
        raise ValueError("no uncensored records")
    y = np.exp(-theta * x)
    mean = float(y.mean())
    if n == 1:
        return mean, 0.0
    loo = (y.sum() - y) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return mean, se


def ks_exponential(samples) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the sample and Exp(1)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    cdf = -np.expm1(-np.maximum(x, 0.0))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def fit_power_law(points) -> tuple[float, float, float]:
    """Least squares of ``ln(mean tau)`` on ``ln(eps)``; returns ``(slope, intercept, r2)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (eps, mean) points")
    if np.any(pts <= 0):
        raise ValueError("eps and means must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


@dataclass
class EpsSummary:
    epsilon: float
    n: int
    n_censored: int
    mean_tau: float
    se_tau: float
    rate: float
    ks: float
    laplace: dict = field(default_factory=dict)
    mean_jumps: float = float("nan")
    large_jump_fraction: float = float("nan")

    @property
    def censor_fraction(self) -> float:
        return self.n_censored / self.n if self.n else 0.0


@dataclass
class EnsembleSummary:
    per_eps: list
    slope: float | None = None
    intercept: float | None = None
    r2: float | None = None

    def by_eps(self, eps: float) -> EpsSummary:
        for s in self.per_eps:
            if s.epsilon == eps:
                return s
        raise KeyError(eps)


def summarize(records, eps_grid, rates: dict, theta_grid=(0.5, 1.0, 2.0)) -> EnsembleSummary:
    """Per-eps statistics and the log-log slope of mean exit times."""
    per = []
    for eps in eps_grid:
        recs = [r for r in records if r.epsilon == eps]
        unc = [r for r in recs if r.cause != "censored"]
        taus = np.array([r.tau for r in unc], dtype=float)
        n_unc = taus.size
        mean = float(taus.mean()) if n_unc else float("nan")
        se = float(taus.std(ddof=1) / math.sqrt(n_unc)) if n_unc > 1 else float("nan")
        ks = ks_exponential([r.normalized_tau for r in unc]) if n_unc else float("nan")
        lap = {th: (laplace_estimate(unc, th) if n_unc else (float("nan"), float("nan")))
               for th in theta_grid}
        jumps = float(np.mean([r.n_large_jumps for r in unc])) if n_unc else float("nan")
        lj = float(np.mean([r.cause == "large_jump" for r in unc])) if n_unc else float("nan")
        per.append(EpsSummary(eps, len(recs), len(recs) - n_unc, mean, se, rates.get(eps, float("nan")),
                              ks, lap, jumps, lj))
    pts = [(s.epsilon, s.mean_tau) for s in per if s.n - s.n_censored > 0 and s.mean_tau > 0]
    out = EnsembleSummary(per)
    if len(pts) >= 3:
        out.slope, out.intercept, out.r2 = fit_power_law(pts)
    return out
