"""Bandit environment, the interaction loop and per-step diagnostics."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import agents
from .agents import AgentConfig, AgentState
from .geometry import ActionSet

GAUSSIAN_NOISE = "gaussian"
UNIFORM_NOISE = "uniform"
OPTIMISM_SAMPLES = 512
REGRET_ROUNDOFF = 1e-10


@dataclass(frozen=True)
class BanditInstance:
    theta_star: np.ndarray
    action_set: ActionSet
    S: float
    noise_kind: str = GAUSSIAN_NOISE
    R: float = 1.0

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        if theta.shape != (self.action_set.dim,):
            raise ValueError("theta_star dimension does not match the action set")
        if not theta.any():
            raise ValueError("theta_star must be nonzero")
        if np.linalg.norm(theta) > self.R * (1 + 1e-12):
            raise ValueError(f"||theta_star|| exceeds R = {self.R}")
        if self.noise_kind not in (GAUSSIAN_NOISE, UNIFORM_NOISE):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if not self.S >= 0:
            raise ValueError("S must be nonnegative")
        theta.flags.writeable = False
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "_best", self.action_set.support(theta).value)

    @property
    def optimal_value(self) -> float:
        return self._best

    @property
    def dim(self) -> int:
        return self.action_set.dim


def draw_reward(instance: BanditInstance, x, rng: np.random.Generator) -> float:
    mean = float(np.dot(x, instance.theta_star))
    if instance.noise_kind == GAUSSIAN_NOISE:
        return mean + instance.S * rng.standard_normal()
    half = instance.S * math.sqrt(3.0)
    return mean + rng.uniform(-half, half)


def instant_regret(instance: BanditInstance, x) -> float:
    r = instance.optimal_value - float(np.dot(x, instance.theta_star))
    if r < 0:
        if r < -REGRET_ROUNDOFF:
            raise ValueError(f"negative regret {r:.3e}: action outside the set")
        r = 0.0
    return r


def coverage_check(state: AgentState, theta_star) -> bool:
    """Whether ``||theta_hat - theta_star||_V <= beta`` (boundary inclusive)."""
    diff = state.stats.estimate - np.asarray(theta_star, dtype=float)
    quad = float(diff @ state.stats.gram.entries @ diff)
    return math.sqrt(max(quad, 0.0)) <= state.beta


@dataclass(frozen=True)
class StepRecord:
    t: int
    x: np.ndarray
    y: float
    regret: float
    beta: float
    coverage: bool
    epl_term: float
    p_opt: float | None = None
    theta: np.ndarray | None = None


@dataclass
class TrialTrace:
    """Columnar per-step records of one seeded run.

    ``thetas`` holds sampled parameters for randomised agents (NaN otherwise);
    ``p_opt`` is NaN when optimism diagnostics were off.
    """

    seed: int
    actions: np.ndarray
    rewards: np.ndarray
    regret: np.ndarray
    beta: np.ndarray
    coverage: np.ndarray
    epl_term: np.ndarray
    p_opt: np.ndarray
    thetas: np.ndarray
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.regret)

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def records(self) -> list[StepRecord]:
        out = []
        for i in range(len(self)):
            p = self.p_opt[i]
            th = self.thetas[i]
            out.append(StepRecord(
                t=i + 1, x=self.actions[i], y=float(self.rewards[i]),
                regret=float(self.regret[i]), beta=float(self.beta[i]),
                coverage=bool(self.coverage[i]), epl_term=float(self.epl_term[i]),
                p_opt=None if math.isnan(p) else float(p),
                theta=None if np.isnan(th).any() else th,
            ))
        return out


def derive_seed(master_seed: int, trial_index: int) -> int:
    """Stable 64-bit per-trial seed from ``(master_seed, trial_index)``."""
    ss = np.random.SeedSequence([int(master_seed), int(trial_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(instance: BanditInstance, config: AgentConfig, n: int, seed: int,
              diagnostics: bool = False) -> TrialTrace:
    """Play ``n`` rounds; a pure function of ``(instance, config, n, seed)``.

    The environment noise and the agent's randomness come from independent
    child streams of ``seed``; optimism estimates use a third stream so that
    switching diagnostics on does not change the trajectory.
    """
    if n < 0:
        raise ValueError("horizon must be nonnegative")
    env_ss, agent_ss, diag_ss = np.random.SeedSequence(int(seed)).spawn(3)
    env_rng = np.random.default_rng(env_ss)
    agent_rng = np.random.default_rng(agent_ss)
    diag_rng = np.random.default_rng(diag_ss)

    d = instance.dim
    actions = np.zeros((n, d))
    thetas = np.full((n, d), np.nan)
    rewards, regret, beta, epl = (np.zeros(n) for _ in range(4))
    coverage = np.zeros(n, dtype=bool)
    p_opt = np.full(n, np.nan)

    state = agents.init_state(config, instance.action_set)
    randomised = config.kind == agents.RANDOMISED
    for i in range(n):
        try:
            beta[i] = state.beta
            coverage[i] = coverage_check(state, instance.theta_star)
            if diagnostics and randomised:
                p_opt[i] = agents.optimism_prob(
                    state, instance.action_set, instance.theta_star,
                    OPTIMISM_SAMPLES, diag_rng)[0]
            x, theta = agents.act(state, instance.action_set, agent_rng)
            y = draw_reward(instance, x, env_rng)
            regret[i] = instant_regret(instance, x)
            state = agents.update(state, x, y)
        except (ArithmeticError, ValueError) as exc:
            raise type(exc)(f"step {i + 1}: {exc}") from exc
        gain = state.stats.last_gain
        epl[i] = gain / (1.0 + gain)  # ||x||^2 in the post-update inverse metric
        actions[i] = x
        rewards[i] = y
        if theta is not None:
            thetas[i] = theta

    return TrialTrace(seed=int(seed), actions=actions, rewards=rewards, regret=regret,
                      beta=beta, coverage=coverage, epl_term=epl, p_opt=p_opt,
                      thetas=thetas, config={"agent": config, "horizon": n})


def _run_indexed(args):
    instance, config, n, master_seed, index, diagnostics = args
    return run_trial(instance, config, n, derive_seed(master_seed, index), diagnostics)


def run_trials(instance: BanditInstance, config: AgentConfig, n: int, trials: int,
               master_seed: int = 0, workers: int = 1,
               diagnostics: bool = False) -> list[TrialTrace]:
    """Run ``trials`` independent trials; results are ordered by trial index."""
    jobs = [(instance, config, n, master_seed, i, diagnostics) for i in range(trials)]
    if workers <= 1 or trials <= 1:
        return [_run_indexed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_indexed, jobs, chunksize=max(1, trials // (4 * workers))))


def epl_bound(d: int, n: int, lam: float) -> float:
    return 2.0 * d * math.log(1.0 + n / (d * lam))


def coverage_everywhere(trace: TrialTrace) -> bool:
    return bool(np.all(trace.coverage))
