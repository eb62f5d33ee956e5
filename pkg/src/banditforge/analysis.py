"""Regret scaling fits, Monte Carlo checks of concentration lemmas, aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .env import TrialTrace


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    grid: list[tuple[int, float, float]]


def loglog_fit(xs, ys) -> tuple[float, float, float]:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _cumulative(trace) -> np.ndarray:
    if isinstance(trace, TrialTrace):
        return trace.cum_regret
    return np.cumsum(np.asarray(trace, dtype=float))


def slope_fit(traces: Sequence, checkpoints: Sequence[int]) -> ScalingFit:
    """Unweighted least-squares line through ``(log n, log mean R_n)``.

    ``traces`` may be :class:`TrialTrace` objects or per-step regret arrays.
    Checkpoints whose mean regret is not positive are dropped.
    """
    if len(checkpoints) < 2 or len(traces) < 2:
        raise ValueError("need at least two checkpoints and two traces")
    cps = sorted(int(c) for c in checkpoints)
    if len(set(cps)) != len(cps):
        raise ValueError("checkpoints must be distinct")
    cum = np.array([_cumulative(t)[np.array(cps) - 1] for t in traces])
    grid = []
    for j, n in enumerate(cps):
        col = cum[:, j]
        mean = float(np.mean(col))
        if mean > 0:
            grid.append((n, mean, float(np.std(col, ddof=1) / math.sqrt(len(col)))))
    if len(grid) < 2:
        raise ValueError("fewer than two checkpoints with positive mean regret")
    slope, intercept, r2 = loglog_fit([g[0] for g in grid], [g[1] for g in grid])
    return ScalingFit(slope, intercept, r2, grid)


def dimension_fit(results: Sequence[tuple[int, float]]) -> float:
    """Slope of log mean regret against log d."""
    if len(results) < 3:
        raise ValueError("need at least three dimensions")
    kept = [(d, r) for d, r in results if r > 0]
    if len(kept) < 2:
        raise ValueError("fewer than two dimensions with positive mean regret")
    return loglog_fit([d for d, _ in kept], [r for _, r in kept])[0]


# -- concentration lemma validators ------------------------------------------

MdsGenerator = Callable[[np.random.Generator, int, int, float], np.ndarray]
NonnegGenerator = Callable[[np.random.Generator, int, int, float],
                           tuple[np.ndarray, np.ndarray]]


def coin_mds(rng, trials, n, c):
    """Fair +-c coin flips."""
    return c * rng.choice([-1.0, 1.0], size=(trials, n))


def zero_mds(rng, trials, n, c):
    return np.zeros((trials, n))


def adaptive_mds(rng, trials, n, c):
    """Centred Bernoulli steps whose success probability follows the last sign."""
    xi = np.empty((trials, n))
    p = np.full(trials, 0.5)
    for t in range(n):
        hit = rng.random(trials) < p
        xi[:, t] = c * np.where(hit, 1.0 - p, -p)
        p = np.where(hit, 0.8, 0.2)
    return xi


def bernoulli_nonneg(rng, trials, n, R, p=0.3):
    alpha = R * (rng.random((trials, n)) < p)
    return alpha, np.full((trials, n), R * p)


def zero_nonneg(rng, trials, n, R):
    return np.zeros((trials, n)), np.zeros((trials, n))


def constant_nonneg(rng, trials, n, R):
    return np.full((trials, n), R), np.full((trials, n), R)


def adaptive_nonneg(rng, trials, n, R):
    """Bernoulli draws whose rate depends on the previous outcome (0.1 or 0.6)."""
    alpha = np.empty((trials, n))
    cond = np.empty((trials, n))
    p = np.full(trials, 0.3)
    for t in range(n):
        cond[:, t] = R * p
        hit = rng.random(trials) < p
        alpha[:, t] = R * hit
        p = np.where(hit, 0.6, 0.1)
    return alpha, cond


MDS_GENERATORS: dict[str, MdsGenerator] = {"coin": coin_mds, "adaptive": adaptive_mds}
NONNEG_GENERATORS: dict[str, NonnegGenerator] = {
    "bernoulli": bernoulli_nonneg, "adaptive": adaptive_nonneg, "constant": constant_nonneg,
}


def mds_bound_mc(c: float, n: int, trials: int, delta: float,
                 rng: np.random.Generator, gen: MdsGenerator = coin_mds,
                 chunk: int = 2000) -> float:
    """Fraction of trials with ``(sum xi)^2 >= 2(c^2 m + 1) log(sqrt(c^2 m + 1)/delta)``
    for some prefix length ``1 <= m <= n``."""
    m = np.arange(1, n + 1)
    bound = 2.0 * (c * c * m + 1.0) * np.log(np.sqrt(c * c * m + 1.0) / delta)
    violations = 0
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        xi = gen(rng, k, n, c)
        if np.any(np.abs(xi) > c * (1 + 1e-12)):
            raise ValueError("generator exceeded the bound c")
        sums = np.cumsum(xi, axis=1)
        violations += int(np.sum(np.any(sums**2 >= bound, axis=1)))
    return violations / trials


def nonneg_bound_mc(gen: NonnegGenerator, R: float, n: int, trials: int,
                    delta: float, rng: np.random.Generator, chunk: int = 2000) -> float:
    """Fraction of trials where ``sum alpha < (1 - 1/e) sum E[alpha|past] - R log(1/delta)``
    for some prefix."""
    violations = 0
    for start in range(0, trials, chunk):
        k = min(chunk, trials - start)
        alpha, cond = gen(rng, k, n, R)
        if np.any(alpha < 0) or np.any(alpha > R * (1 + 1e-12)):
            raise ValueError("generator left [0, R]")
        lower = (1.0 - 1.0 / math.e) * np.cumsum(cond, axis=1) - R * math.log(1.0 / delta)
        violations += int(np.sum(np.any(np.cumsum(alpha, axis=1) < lower, axis=1)))
    return violations / trials


def binomial_se(p: float, trials: int) -> float:
    return math.sqrt(p * (1.0 - p) / trials)


# -- aggregation ---------------------------------------------------------------


@dataclass(frozen=True)
class RegretCurves:
    t: np.ndarray
    mean: np.ndarray
    q10: np.ndarray
    q90: np.ndarray
    se: np.ndarray


def aggregate(traces: Sequence) -> RegretCurves:
    """Pointwise mean, 10/90% quantiles and standard error of cumulative regret.

    Values are sorted across trials before reduction, so the result does not
    depend on trace order.
    """
    if len(traces) == 0:
        raise ValueError("no traces to aggregate")
    cums = [_cumulative(t) for t in traces]
    if len({len(c) for c in cums}) != 1:
        raise ValueError("traces have mismatched horizons")
    cum = np.sort(np.array(cums), axis=0)
    k = cum.shape[0]
    mean = np.mean(cum, axis=0)
    se = (np.std(cum, axis=0, ddof=1) / math.sqrt(k)) if k > 1 else np.zeros_like(mean)
    q10, q90 = np.quantile(cum, [0.1, 0.9], axis=0, method="inverted_cdf")
    return RegretCurves(np.arange(1, cum.shape[1] + 1), mean, q10, q90, se)
