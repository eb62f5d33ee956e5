"""Action-selection policies for linear bandits.

``randomised`` samples ``theta_t = theta_hat + s * W eta_t`` (``W`` the
triangular whitening map, ``s`` the inflation factor, 1 by default) and plays
the support maximiser of ``theta_t``. ``oful`` maximises the optimistic index
``<x, theta_hat> + beta ||x||_{V^{-1}}``. ``phased_etc`` alternates a sweep of
``d`` independent actions with greedy phases of doubling length.
``uniform`` plays random actions and serves as a linear-regret reference.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import linops
from .geometry import ActionSet, DegenerateDirectionError, Finite, exploration_basis
from .perturb import PerturbationSpec, sample_many

log = logging.getLogger(__name__)

RANDOMISED = "randomised"
OFUL = "oful"
PHASED_ETC = "phased_etc"
UNIFORM = "uniform"
KINDS = (RANDOMISED, OFUL, PHASED_ETC, UNIFORM)


@dataclass(frozen=True)
class AgentConfig:
    kind: str = RANDOMISED
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    inflation: float = 1.0
    restarts: int = 16
    iters: int = 200
    lam: float = 1.0
    delta: float = 0.05
    R: float = 1.0
    S: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.lam < 1:
            warnings.warn("lambda < 1 lies outside the regime of the regret bound")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if not self.S >= 0:
            raise ValueError(f"S must be nonnegative, got {self.S}")
        if not self.inflation >= 1:
            raise ValueError(f"inflation must be >= 1, got {self.inflation}")
        if self.restarts < 1 or self.iters < 1:
            raise ValueError("restarts and iters must be positive")


@dataclass(frozen=True)
class AgentState:
    stats: linops.SufficientStats
    beta: float
    config: AgentConfig
    basis: np.ndarray | None = None
    # phased explore-then-commit: {phase index: frozen greedy action}
    phase: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.stats.dim


def beta_width(state_or_stats, config: AgentConfig | None = None) -> float:
    """``R sqrt(lam) + S sqrt(2 log(1/delta) + log(det V / lam^d))``."""
    if isinstance(state_or_stats, AgentState):
        stats, config = state_or_stats.stats, state_or_stats.config
    else:
        stats = state_or_stats
    lam = stats.lam
    log_ratio = stats.gram.log_det - stats.dim * math.log(lam)
    inside = max(0.0, 2.0 * math.log(1.0 / config.delta) + log_ratio)
    return config.R * math.sqrt(lam) + config.S * math.sqrt(inside)


def init_state(config: AgentConfig, action_set: ActionSet) -> AgentState:
    stats = linops.SufficientStats.initial(action_set.dim, config.lam)
    basis = exploration_basis(action_set) if config.kind == PHASED_ETC else None
    return AgentState(stats, beta_width(stats, config), config, basis)


def update(state: AgentState, x, y: float) -> AgentState:
    stats = linops.rank_one_update(state.stats, x, y)
    return replace(state, stats=stats, beta=beta_width(stats, state.config))


def _fallback_action(action_set: ActionSet) -> np.ndarray:
    e = np.zeros(action_set.dim)
    e[0] = 1.0
    return action_set.support(e).maximizer


def act_randomised(state: AgentState, action_set: ActionSet,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    cfg = state.config
    d = state.dim
    for _ in range(2):
        eta = sample_many(cfg.perturbation, d, 1, rng)[0]
        theta = state.stats.estimate + cfg.inflation * linops.whiten(state.stats.gram, eta)
        try:
            return action_set.support(theta).maximizer, theta
        except DegenerateDirectionError:
            continue
    log.warning("sampled theta was zero twice at step %d; playing fallback action",
                state.stats.step + 1)
    return _fallback_action(action_set), theta


def oful_objective(state: AgentState, x) -> float:
    return float(x @ state.stats.estimate) + state.beta * math.sqrt(
        linops.inverse_quad(state.stats.gram, x))


def _ascend(state: AgentState, action_set: ActionSet, x: np.ndarray,
            iters: int) -> tuple[np.ndarray, float]:
    # The index is convex in x, so jumping to the support maximiser of its
    # gradient never decreases it.
    theta_hat, gram, beta = state.stats.estimate, state.stats.gram, state.beta
    best = oful_objective(state, x)
    for _ in range(iters):
        vinv_x = linops.solve(gram, x)
        width = math.sqrt(max(float(x @ vinv_x), 0.0))
        grad = theta_hat + (beta / width) * vinv_x if width > 0 else theta_hat
        try:
            x_new = action_set.support(grad).maximizer
        except DegenerateDirectionError:
            break
        value = oful_objective(state, x_new)
        if value <= best + 1e-15:
            if value > best:
                x, best = x_new, value
            break
        x, best = x_new, value
    return x, best


def act_oful(state: AgentState, action_set: ActionSet,
             rng: np.random.Generator) -> np.ndarray:
    if isinstance(action_set, Finite):
        pts = action_set.points
        scores = pts @ state.stats.estimate + state.beta * _inv_norms(state, pts)
        return pts[int(np.argmax(scores))].copy()

    d = state.dim
    starts = []
    if state.stats.estimate.any():
        starts.append(action_set.support(state.stats.estimate).maximizer)
    for u in rng.standard_normal((state.config.restarts, d)):
        if len(starts) >= state.config.restarts:
            break
        if u.any():
            starts.append(action_set.support(u).maximizer)
    best_x, best_v = None, -math.inf
    for x0 in starts:
        x, v = _ascend(state, action_set, x0, state.config.iters)
        if v > best_v:
            best_x, best_v = x, v
    return best_x


def _inv_norms(state: AgentState, pts: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular

    z = solve_triangular(state.stats.gram.factor, pts.T, lower=True)
    return np.sqrt(np.sum(z * z, axis=0))


def etc_schedule(step: int, d: int) -> tuple[int, int, bool]:
    """Locate ``step`` (0-based) in the phased schedule.

    Returns ``(phase k, offset within block, exploring)``; phase ``k`` is a
    ``d``-step sweep followed by ``2**k`` greedy steps.
    """
    k = 1
    while True:
        if step < d:
            return k, step, True
        step -= d
        if step < 2**k:
            return k, step, False
        step -= 2**k
        k += 1


def act_phased_etc(state: AgentState, action_set: ActionSet,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    k, offset, exploring = etc_schedule(state.stats.step, state.dim)
    if exploring:
        return state.basis[offset].copy()
    if k not in state.phase:
        est = state.stats.estimate
        state.phase.clear()
        state.phase[k] = (action_set.support(est).maximizer if est.any()
                          else state.basis[0].copy())
    return state.phase[k].copy()


def act_uniform(state: AgentState, action_set: ActionSet,
                rng: np.random.Generator) -> np.ndarray:
    """A uniform point of a finite set, else the maximiser of a Gaussian direction.

    On the Euclidean ball the latter is uniform on the sphere.
    """
    if isinstance(action_set, Finite):
        return action_set.points[rng.integers(len(action_set.points))].copy()
    while True:
        u = rng.standard_normal(state.dim)
        if u.any():
            return action_set.support(u).maximizer


def act(state: AgentState, action_set: ActionSet,
        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray | None]:
    """Dispatch on the agent kind; returns ``(action, sampled theta or None)``."""
    kind = state.config.kind
    if kind == RANDOMISED:
        return act_randomised(state, action_set, rng)
    if kind == OFUL:
        return act_oful(state, action_set, rng), None
    if kind == PHASED_ETC:
        return act_phased_etc(state, action_set, rng), None
    return act_uniform(state, action_set, rng), None


def optimism_prob(state: AgentState, action_set: ActionSet, theta_star,
                  n_mc: int, rng: np.random.Generator) -> tuple[float, bool]:
    """Monte Carlo estimate of ``P(J(theta_t) >= J(theta_star))``.

    The second element flags whether the estimate is at or below the
    ``1 / (16 K^4)`` threshold.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    cfg = state.config
    eta = sample_many(cfg.perturbation, state.dim, n_mc, rng)
    thetas = state.stats.estimate + cfg.inflation * linops.whiten_many(state.stats.gram, eta)
    j_star = float(action_set.support_values(np.asarray(theta_star, dtype=float))[0])
    p_hat = float(np.mean(action_set.support_values(thetas) >= j_star))
    return p_hat, p_hat <= 1.0 / (16.0 * cfg.perturbation.K**4)
