"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Simulations shared between criteria live in module-scoped fixtures, so the
module is cheapest when run as a whole.
"""
import math
import os
import time

import numpy as np
import pytest

from banditforge import agents, analysis, env, experiment, geometry, perturb
from banditforge.agents import AgentConfig, AgentState
from banditforge.config import PRESETS, parse_config
from banditforge.linops import SpdMatrix, SufficientStats

WORKERS = os.cpu_count() or 1
CHECKPOINTS = [2**k for k in range(8, 14)]
N1 = CHECKPOINTS[-1]
N_DIM = 4096
S, LAM = 0.5, 1.0
TS = AgentConfig(kind=agents.RANDOMISED, lam=LAM, delta=0.01, S=S)


def l2_instance(d, S=S):
    theta = np.zeros(d)
    theta[0] = 0.8
    return env.BanditInstance(theta, geometry.L2Ball(d), S=S)


def mean_se(traces):
    final = np.array([t.cum_regret[-1] for t in traces])
    return final.mean(), final.std(ddof=1) / math.sqrt(len(final))


@pytest.fixture(scope="module")
def rate_runs():
    start = time.perf_counter()
    runs = {d: env.run_trials(l2_instance(d), TS, N1, 100, master_seed=1, workers=WORKERS)
            for d in (2, 5)}
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def dim_runs(rate_runs):
    runs = {}
    for d in (2, 4, 8, 16):
        if d == 2:
            # prefixes of criterion-1 runs are the n = 4096 runs of the same seeds
            runs[d] = [t.regret[:N_DIM] for t in rate_runs[0][2][:50]]
        else:
            traces = env.run_trials(l2_instance(d), TS, N_DIM, 50, master_seed=1, workers=WORKERS)
            runs[d] = [t.regret for t in traces]
    return runs


def test_c01_regret_rate_in_n(rate_runs, verdict):
    runs, elapsed = rate_runs
    slopes = {d: analysis.slope_fit(tr, CHECKPOINTS).slope for d, tr in runs.items()}
    ok = all(0.35 <= s <= 0.65 for s in slopes.values()) and elapsed < 300
    detail = ", ".join(f"d={d} slope {s:.3f}" for d, s in slopes.items())
    assert verdict(1, "regret rate in n", ok,
                   f"{detail} (target [0.35, 0.65]); runtime {elapsed:.0f}s (< 300s)")


def test_c02_dimension_scaling(dim_runs, verdict):
    means = [(d, float(np.mean([np.sum(r) for r in tr]))) for d, tr in dim_runs.items()]
    exponent = analysis.dimension_fit(means)
    ok = 0.7 <= exponent <= 1.4
    detail = ", ".join(f"d={d}: {m:.1f}" for d, m in means)
    assert verdict(2, "dimension scaling", ok,
                   f"exponent {exponent:.3f} (target [0.7, 1.4]); mean R_4096 {detail}")


def test_c03_uniform_contrast(rate_runs, verdict):
    uni = env.run_trials(l2_instance(2), AgentConfig(kind=agents.UNIFORM, S=S), N1, 100,
                         master_seed=1, workers=WORKERS)
    s_uni = analysis.slope_fit(uni, CHECKPOINTS).slope
    s_ts = analysis.slope_fit(rate_runs[0][2], CHECKPOINTS).slope
    ok = s_uni >= 0.9 and s_uni - s_ts >= 0.25
    assert verdict(3, "uniform baseline contrast", ok,
                   f"uniform slope {s_uni:.3f} (>= 0.9), gap to LinTS {s_uni - s_ts:.3f} (>= 0.25)")


def test_c04_no_inflation_advantage(verdict):
    d = 8
    inflated = AgentConfig(kind=agents.RANDOMISED, lam=LAM, delta=0.01, S=S,
                           inflation=math.sqrt(d * math.log(N_DIM)))
    inst = l2_instance(d)
    plain = env.run_trials(inst, TS, N_DIM, 50, master_seed=4, workers=WORKERS)
    infl = env.run_trials(inst, inflated, N_DIM, 50, master_seed=4, workers=WORKERS)
    (m0, se0), (m1, se1) = mean_se(plain), mean_se(infl)
    pooled = math.hypot(se0, se1)
    ok = m0 <= m1 and (m1 - m0) > 2 * pooled
    assert verdict(4, "no-inflation advantage", ok,
                   f"plain {m0:.1f} vs inflated {m1:.1f}, gap {m1 - m0:.1f} "
                   f"> 2 pooled SE {2 * pooled:.1f}")


def test_c05_confidence_coverage(verdict):
    cfg = AgentConfig(kind=agents.RANDOMISED, lam=LAM, delta=0.1, S=S)
    traces = env.run_trials(l2_instance(2), cfg, 2048, 200, master_seed=5, workers=WORKERS)
    frac = float(np.mean([env.coverage_everywhere(t) for t in traces]))
    limit = 0.9 - 3 * analysis.binomial_se(0.9, 200)
    assert verdict(5, "confidence coverage", frac >= limit,
                   f"{frac:.3f} of runs covered at every step (>= {limit:.3f})")


def test_c06_regret_identity(verdict):
    cases = [env.BanditInstance(np.array([0.5, -0.4, 0.3]), geometry.LqBall(3, 3.0), S=S),
             l2_instance(2)]
    worst, steps = 0.0, 0
    for k, inst in enumerate(cases):
        for tr in env.run_trials(inst, TS, 1024, 5, master_seed=6 + k, workers=WORKERS,
                                 diagnostics=True):
            worst = max(worst, experiment.regret_identity_residual(inst, tr))
            steps += len(tr)
            assert not np.isnan(tr.thetas).any()
    ok = worst <= 1e-9 and steps == 10 * 1024
    assert verdict(6, "regret identity", ok,
                   f"max |r_t - D_J| = {worst:.2e} over {steps} steps (<= 1e-9)")


def test_c07_elliptical_potential(rate_runs, verdict):
    runs = rate_runs[0]
    worst, violations, total = 0.0, 0, 0
    for d, traces in runs.items():
        bound = env.epl_bound(d, N1, LAM)
        for tr in traces:
            s = float(np.sum(tr.epl_term))
            worst = max(worst, s / bound)
            violations += s > bound
            total += 1
    assert verdict(7, "elliptical potential", violations == 0,
                   f"{violations} violations in {total} trials; max sum/bound {worst:.3f}")


def test_c08_concentration_validators(verdict):
    rng = np.random.default_rng(8)
    trials, n = 10_000, 1000
    rows = []
    for delta in (0.05, 0.2):
        limit = delta + 3 * analysis.binomial_se(delta, trials)
        for name, gen in analysis.MDS_GENERATORS.items():
            rows.append((f"mds.{name}@{delta}",
                         analysis.mds_bound_mc(1.0, n, trials, delta, rng, gen), limit))
        for name, gen in analysis.NONNEG_GENERATORS.items():
            rows.append((f"nonneg.{name}@{delta}",
                         analysis.nonneg_bound_mc(gen, 1.0, n, trials, delta, rng), limit))
    ok = all(rate <= limit for _, rate, limit in rows)
    detail = ", ".join(f"{k} {r:.4f}/{lim:.4f}" for k, r, lim in rows)
    assert verdict(8, "concentration validators", ok, detail)


def test_c09_moment_audits(verdict):
    rng = np.random.default_rng(9)
    d = 4
    g = perturb.moment_report(perturb.PerturbationSpec(perturb.GAUSSIAN), d, 400_000, 16, rng)
    s = perturb.moment_report(perturb.PerturbationSpec(perturb.SPHERE), d, 400_000, 16, rng)
    m4 = 3 * d / (d + 2)
    ok = g.within(1.0, 3.0) and s.within(1.0, m4)
    assert verdict(9, "moment audits", ok,
                   f"gaussian E<u,eta>^2 in [{g.second_min:.4f}, {g.second_max:.4f}], "
                   f"max E<u,eta>^4 {g.fourth_max:.4f} (1, 3); sphere second in "
                   f"[{s.second_min:.4f}, {s.second_max:.4f}], max fourth {s.fourth_max:.4f} "
                   f"(1, {m4:.4f})")


def test_c10_convexity_moduli(verdict):
    rng = np.random.default_rng(10)
    rows = []
    for q in (1.5, 2.0, 3.0, 4.0):
        m, M = geometry.lq_moduli(q)
        lo, hi = geometry.convexity_probe(geometry.LqBall(2, q), geometry.LpNorm(q / (q - 1)),
                                          10_000, rng)
        rows.append((q, lo, hi, m, M, lo >= m - 1e-6 and hi <= M + 1e-6))
    detail = "; ".join(f"q={q}: [{lo:.4f}, {hi:.4f}] vs [{m:.4f}, {M:.4f}] "
                       f"{'ok' if good else 'outside'}" for q, lo, hi, m, M, good in rows)
    assert verdict(10, "convexity moduli", all(r[-1] for r in rows), detail)


def _grid_objective(state, q, step=1e-4):
    """Best objective over boundary points of the unit q-ball at angular spacing ``step``."""
    phi = np.arange(0.0, 2 * np.pi, step)
    u = np.column_stack([np.cos(phi), np.sin(phi)])
    pts = u / (np.sum(np.abs(u) ** q, axis=1) ** (1.0 / q))[:, None]
    vinv = np.linalg.inv(state.stats.gram.entries)
    widths = np.sqrt(np.einsum("ij,jk,ik->i", pts, vinv, pts))
    return float(np.max(pts @ state.stats.estimate + state.beta * widths))


def test_c11_oful_grid_agreement(verdict):
    rng = np.random.default_rng(11)
    gaps = {}
    for q, aset in ((2.0, geometry.L2Ball(2)), (3.0, geometry.LqBall(2, 3.0))):
        worst = 0.0
        for _ in range(100):
            X = rng.standard_normal((rng.integers(1, 20), 2))
            V = np.eye(2) + X.T @ X
            theta_hat = rng.standard_normal(2)
            gram = SpdMatrix.from_dense(V)
            stats = SufficientStats(gram, V @ theta_hat, theta_hat, step=len(X), lam=1.0)
            state = AgentState(stats, float(rng.uniform(0.05, 3.0)), AgentConfig(kind=agents.OFUL))
            x = agents.act_oful(state, aset, rng)
            worst = max(worst, abs(agents.oful_objective(state, x) - _grid_objective(state, q)))
        gaps[type(aset).__name__] = worst
    ok = all(g <= 1e-3 for g in gaps.values())
    assert verdict(11, "OFUL grid agreement", ok,
                   ", ".join(f"{k} max gap {v:.2e}" for k, v in gaps.items()) + " (<= 1e-3)")


def test_c12_worker_determinism(tmp_path, verdict):
    text = (PRESETS["smooth"].replace("horizon = 2048", "horizon = 256")
            .replace("trials = 20", "trials = 16")
            .replace("checkpoints = 256, 512, 1024, 2048", "checkpoints = 64, 128, 256"))
    cfg = parse_config(text)
    for w in (1, 8):
        experiment.run_experiment(cfg, tmp_path / f"w{w}", workers=w, figures=False)
    same = [(tmp_path / "w1" / a / "aggregate.csv").read_bytes() ==
            (tmp_path / "w8" / a / "aggregate.csv").read_bytes() for a in cfg.agents]
    assert verdict(12, "determinism across workers", all(same),
                   f"{sum(same)}/{len(same)} aggregate CSVs byte-identical for workers 1 vs 8")
