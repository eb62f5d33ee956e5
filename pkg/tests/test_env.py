import math

import numpy as np
import pytest

from banditforge import agents, env, geometry, linops
from banditforge.agents import AgentConfig, AgentState
from banditforge.env import BanditInstance
from banditforge.geometry import L2Ball, LqBall


def inst(theta=(0.8, 0.0), aset=None, S=0.5, **kw):
    theta = np.asarray(theta, float)
    return BanditInstance(theta, aset or L2Ball(len(theta)), S=S, **kw)


def test_instance_validation():
    with pytest.raises(ValueError):
        inst(theta=(0.0, 0.0))
    with pytest.raises(ValueError):
        inst(theta=(1.5, 0.0))
    with pytest.raises(ValueError):
        inst(theta=(0.5, 0.0, 0.0), aset=L2Ball(2))
    with pytest.raises(ValueError):
        inst(noise_kind="cauchy")


def test_noise_free_reward_is_exact():
    i = inst(theta=(0.3, -0.4), S=0.0)
    assert env.draw_reward(i, np.array([0.6, 0.8]), np.random.default_rng(0)) == \
        pytest.approx(0.18 - 0.32, abs=1e-15)


@pytest.mark.parametrize("noise", [env.GAUSSIAN_NOISE, env.UNIFORM_NOISE])
def test_reward_mean(noise):
    i = inst(theta=(0.3, -0.4), S=0.5, noise_kind=noise)
    x = np.array([0.6, 0.8])
    rng = np.random.default_rng(11)
    ys = np.array([env.draw_reward(i, x, rng) for _ in range(100_000)])
    assert abs(ys.mean() - float(x @ i.theta_star)) <= 5 * 0.5 / math.sqrt(1e5)
    assert ys.std() == pytest.approx(0.5, rel=0.02)
    if noise == env.UNIFORM_NOISE:
        assert np.max(np.abs(ys - x @ i.theta_star)) <= 0.5 * math.sqrt(3)


def test_reward_determinism():
    i = inst()
    a = env.draw_reward(i, [1.0, 0.0], np.random.default_rng(3))
    b = env.draw_reward(i, [1.0, 0.0], np.random.default_rng(3))
    assert a == b


def test_regret_examples():
    i = inst(theta=(1.0, 0.0))
    assert env.instant_regret(i, np.array([0.0, 1.0])) == 1.0
    assert env.instant_regret(i, i.action_set.support(i.theta_star).maximizer) == 0.0
    assert env.instant_regret(i, np.array([1.0 + 1e-12, 0.0])) == 0.0
    with pytest.raises(ValueError):
        env.instant_regret(i, np.array([1.1, 0.0]))


def test_regret_equals_divergence(rng):
    aset = LqBall(3, 3.0)
    i = inst(theta=(0.5, -0.3, 0.2), aset=aset)
    for _ in range(50):
        theta = rng.standard_normal(3)
        x = aset.support(theta).maximizer
        r = env.instant_regret(i, x)
        assert abs(r - geometry.bregman(aset, i.theta_star, theta)) <= 1e-9


def _state(V, theta_hat, beta):
    gram = linops.SpdMatrix.from_dense(np.asarray(V, float))
    stats = linops.SufficientStats(gram, gram.entries @ theta_hat, np.asarray(theta_hat, float),
                                   step=0, lam=1.0)
    return AgentState(stats, beta, AgentConfig())


def test_coverage_examples():
    theta = np.array([0.3, 0.4])
    assert env.coverage_check(_state(np.eye(2), theta, 0.1), theta)
    # distance under V = 4I is 2 * 0.5 = 1.0 exactly
    assert env.coverage_check(_state(4 * np.eye(2), theta + [0.3, 0.4], 1.0), theta)
    assert not env.coverage_check(_state(4 * np.eye(2), theta + [0.3, 0.4], 0.999), theta)


def test_empty_trial():
    tr = env.run_trial(inst(), AgentConfig(), 0, seed=1)
    assert len(tr) == 0
    assert tr.actions.shape == (0, 2)
    assert tr.records == []


def test_uniform_agent_regret_matches_closed_form():
    n = 10_000
    tr = env.run_trial(inst(), AgentConfig(kind=agents.UNIFORM), n, seed=17)
    # per-step regret 0.8(1 - x1), x1 = cos(phi) has variance 1/2
    se = 0.8 * math.sqrt(0.5 * n)
    assert abs(tr.cum_regret[-1] - 0.8 * n) <= 5 * se


def _assert_traces_equal(a, b):
    for name in ("actions", "rewards", "regret", "beta", "coverage", "epl_term", "p_opt",
                 "thetas"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)


@pytest.mark.parametrize("kind", agents.KINDS)
def test_identical_seeds_identical_traces(kind):
    cfg = AgentConfig(kind=kind, restarts=2, iters=10)
    i = inst(aset=LqBall(2, 3.0))
    _assert_traces_equal(env.run_trial(i, cfg, 100, seed=99), env.run_trial(i, cfg, 100, seed=99))


def test_different_seeds_differ():
    a = env.run_trial(inst(), AgentConfig(), 50, seed=1)
    b = env.run_trial(inst(), AgentConfig(), 50, seed=2)
    assert not np.array_equal(a.rewards, b.rewards)


def test_diagnostics_leave_trajectory_unchanged():
    i = inst()
    plain = env.run_trial(i, AgentConfig(), 200, seed=5)
    diag = env.run_trial(i, AgentConfig(), 200, seed=5, diagnostics=True)
    np.testing.assert_array_equal(plain.actions, diag.actions)
    np.testing.assert_array_equal(plain.rewards, diag.rewards)
    assert np.all(np.isnan(plain.p_opt))
    assert np.all((diag.p_opt >= 0) & (diag.p_opt <= 1))


@pytest.mark.parametrize("kind", agents.KINDS)
def test_trace_invariants(kind):
    n = 500
    i = inst(theta=(0.1, 0.5, -0.6))
    tr = env.run_trial(i, AgentConfig(kind=kind, restarts=2, iters=20), n, seed=8)
    assert len(tr) == n
    assert np.all(tr.regret >= 0)
    assert np.all(np.diff(tr.cum_regret) >= 0)
    assert np.all(np.diff(tr.beta) >= 0)
    assert tr.epl_term.sum() <= env.epl_bound(3, n, 1.0)
    if kind == agents.RANDOMISED:
        assert not np.isnan(tr.thetas).any()
    else:
        assert np.isnan(tr.thetas).all()


def test_epl_term_uses_post_update_matrix():
    tr = env.run_trial(inst(), AgentConfig(lam=1.0), 30, seed=4)
    V = np.eye(2)
    for x, e in zip(tr.actions, tr.epl_term):
        V = V + np.outer(x, x)
        assert e == pytest.approx(float(x @ np.linalg.solve(V, x)), rel=1e-10)


def test_records_view():
    tr = env.run_trial(inst(), AgentConfig(), 5, seed=2)
    recs = tr.records
    assert [r.t for r in recs] == [1, 2, 3, 4, 5]
    assert recs[0].p_opt is None
    assert recs[0].theta is not None
    assert recs[2].regret == tr.regret[2]


def test_seed_derivation_is_stable():
    assert env.derive_seed(0, 0) == env.derive_seed(0, 0)
    assert env.derive_seed(0, 1) != env.derive_seed(1, 0)
    assert 0 <= env.derive_seed(2**64 - 1, 5) < 2**64


def test_worker_count_does_not_change_results():
    i = inst()
    a = env.run_trials(i, AgentConfig(), 64, trials=6, master_seed=3, workers=1)
    b = env.run_trials(i, AgentConfig(), 64, trials=6, master_seed=3, workers=3)
    for x, y in zip(a, b):
        _assert_traces_equal(x, y)


def test_negative_horizon_rejected():
    with pytest.raises(ValueError):
        env.run_trial(inst(), AgentConfig(), -1, seed=0)
