"""Experiment orchestration behind the command-line subcommands."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, env, geometry, perturb, plotting, serialise
from .agents import RANDOMISED, AgentConfig
from .config import ExperimentConfig

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.05


def _guarded_trial(args):
    instance, cfg, n, master_seed, index, diagnostics = args
    try:
        seed = env.derive_seed(master_seed, index)
        return index, env.run_trial(instance, cfg, n, seed, diagnostics), None
    except (ArithmeticError, ValueError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def run_guarded(instance, cfg: AgentConfig, n: int, trials: int, master_seed: int,
                workers: int, diagnostics: bool):
    """Run trials, keeping failures instead of raising. Ordered by trial index."""
    jobs = [(instance, cfg, n, master_seed, i, diagnostics) for i in range(trials)]
    if workers <= 1 or trials <= 1:
        results = [_guarded_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_guarded_trial, jobs))
    ok = [(i, tr) for i, tr, err in results if tr is not None]
    failed = {i: err for i, tr, err in results if tr is None}
    return ok, failed


def regret_identity_residual(instance: env.BanditInstance, trace: env.TrialTrace) -> float:
    """Largest ``|r_t - D_J(theta_star, theta_t)|`` over the steps of a trace."""
    worst = 0.0
    for r, theta in zip(trace.regret, trace.thetas):
        if np.isnan(theta).any():
            continue
        div = geometry.bregman(instance.action_set, instance.theta_star, theta)
        worst = max(worst, abs(r - div))
    return worst


def _agent_summary(config: ExperimentConfig, name: str, cfg: AgentConfig, traces,
                   failed, diagnostics: bool) -> dict:
    n, d = config.horizon, config.instance.dim
    out: dict = {"kind": cfg.kind, "trials": len(traces), "failed": len(failed),
                 "failures": {str(k): v for k, v in sorted(failed.items())}}
    if not traces or n == 0:
        return out
    final = np.array([tr.cum_regret[-1] for tr in traces])
    out["mean_regret"] = float(np.mean(np.sort(final)))
    out["se_regret"] = float(np.std(final, ddof=1) / math.sqrt(len(final))) if len(final) > 1 else 0.0
    out["coverage_fraction"] = float(np.mean([env.coverage_everywhere(t) for t in traces]))
    bound = env.epl_bound(d, n, cfg.lam)
    out["epl_bound"] = bound
    out["epl_violations"] = int(sum(float(np.sum(t.epl_term)) > bound for t in traces))
    cps = config.checkpoints
    if len(cps) >= 2 and len(traces) >= 2:
        try:
            fit = analysis.slope_fit([t.regret for t in traces], cps)
            out["slope"] = {"slope": fit.slope, "intercept": fit.intercept,
                            "r_squared": fit.r_squared}
        except ValueError as exc:
            out["slope"] = {"error": str(exc)}
    if diagnostics and cfg.kind == RANDOMISED:
        out["regret_identity_max_residual"] = max(
            regret_identity_residual(config.instance, t) for t in traces)
        p = np.concatenate([t.p_opt for t in traces])
        thr = 1.0 / (16.0 * cfg.perturbation.K**4)
        out["p_opt_mean"] = float(np.mean(p))
        out["p_opt_below_threshold_fraction"] = float(np.mean(p <= thr))
    return out


def run_experiment(config: ExperimentConfig, out_dir: str | Path,
                   workers: int | None = None, diagnostics: bool | None = None,
                   figures: bool = True) -> int:
    """Run every configured agent and write traces, aggregates, curves and a summary.

    Returns a process exit status: 0 on success, 2 when too many trials failed.
    """
    out_dir = Path(out_dir)
    workers = config.workers if workers is None else workers
    diagnostics = config.diagnostics if diagnostics is None else diagnostics
    summary: dict = {"horizon": config.horizon, "trials": config.trials,
                     "master_seed": config.master_seed, "diagnostics": diagnostics,
                     "theta_star": config.instance.theta_star.tolist(), "agents": {}}
    curves = {}
    status = 0
    for name, cfg in config.agents.items():
        traces, failed = run_guarded(config.instance, cfg, config.horizon, config.trials,
                                     config.master_seed, workers, diagnostics)
        adir = out_dir / name
        if len(failed) >= MAX_FAILURE_FRACTION * config.trials and failed:
            log.error("agent %s: %d of %d trials failed", name, len(failed), config.trials)
            summary["agents"][name] = {"failed": len(failed), "failures": failed,
                                       "aborted": True}
            status = 2
            break
        for i, tr in traces:
            serialise.atomic_write(adir / "traces" / f"trial_{i:04d}.csv",
                                   serialise.trace_csv(tr))
        serialise.atomic_write(adir / "aggregate.csv", serialise.aggregate_csv(traces))
        plain = [tr for _, tr in traces]
        if plain:
            c = analysis.aggregate(plain)
            curves[name] = c
            serialise.atomic_write(adir / "curves.csv", serialise.curves_csv(c))
        summary["agents"][name] = _agent_summary(config, name, cfg, plain, failed,
                                                 diagnostics)
    serialise.atomic_write(out_dir / "config.ini", config.source)
    serialise.atomic_write(out_dir / "summary.json", serialise.summary_text(summary))
    if figures and curves and config.horizon > 0:
        plotting.regret_curves(curves, out_dir / "regret.png")
    return status


def powers_of_two_upto(n: int, start: int = 8) -> list[int]:
    cps, k = [], start
    while 2**k <= n:
        cps.append(2**k)
        k += 1
    return cps


def _instance_in_dim(base: env.BanditInstance, d: int, rng) -> env.BanditInstance:
    s = base.action_set
    if isinstance(s, geometry.LqBall):
        aset = geometry.LqBall(d, s.q)
    elif isinstance(s, geometry.L2Ball):
        aset = geometry.L2Ball(d)
    else:
        raise ValueError("dimension sweeps need an l2 or lq action set")
    u = rng.standard_normal(d)
    theta = float(np.linalg.norm(base.theta_star)) * u / np.linalg.norm(u)
    return env.BanditInstance(theta, aset, base.S, base.noise_kind, base.R)


def run_scale(config: ExperimentConfig, out_dir: str | Path, dims: list[int],
              dim_horizon: int, dim_trials: int, workers: int = 1) -> dict:
    """Fit regret exponents in ``n`` (configured instance) and in ``d``."""
    out_dir = Path(out_dir)
    name, cfg = next(((k, a) for k, a in config.agents.items() if a.kind == RANDOMISED),
                     next(iter(config.agents.items())))
    cps = config.checkpoints or powers_of_two_upto(config.horizon)
    traces = env.run_trials(config.instance, cfg, config.horizon, config.trials,
                            config.master_seed, workers)
    fit_n = analysis.slope_fit(traces, cps)
    rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, 7]))
    by_dim = []
    for d in dims:
        inst = _instance_in_dim(config.instance, d, rng)
        trs = env.run_trials(inst, cfg, dim_horizon, dim_trials, config.master_seed, workers)
        by_dim.append((d, float(np.mean(np.sort([t.cum_regret[-1] for t in trs])))))
    exponent = analysis.dimension_fit(by_dim)
    result = {
        "agent": name,
        "n_fit": {"slope": fit_n.slope, "intercept": fit_n.intercept,
                  "r_squared": fit_n.r_squared, "grid": fit_n.grid},
        "d_fit": {"exponent": exponent, "horizon": dim_horizon, "trials": dim_trials,
                  "grid": by_dim},
    }
    serialise.atomic_write(out_dir / "scale.json", serialise.summary_text(result))
    plotting.scaling_plot({name: fit_n}, out_dir / "scaling_n.png")
    _, intercept, r2 = analysis.loglog_fit([g[0] for g in by_dim], [g[1] for g in by_dim])
    d_fit = analysis.ScalingFit(exponent, intercept, r2, [(d, r, 0.0) for d, r in by_dim])
    plotting.scaling_plot({name: d_fit}, out_dir / "scaling_d.png", xlabel="dimension $d$")
    return result


def run_checks(seed: int = 0, validator_trials: int = 10_000, validator_n: int = 1000,
               pairs: int = 10_000, moment_samples: int = 200_000, d: int = 4) -> dict:
    """Moment audits, lemma validators and convexity probes with pass/fail verdicts."""
    root = np.random.SeedSequence(seed)
    streams = iter(np.random.default_rng(s) for s in root.spawn(64))
    checks: dict[str, dict] = {}

    for label, spec, m4 in (("gaussian", perturb.PerturbationSpec(perturb.GAUSSIAN), 3.0),
                            ("sphere", perturb.PerturbationSpec(perturb.SPHERE),
                             3.0 * d / (d + 2.0))):
        rep = perturb.moment_report(spec, d, moment_samples, 16, next(streams))
        checks[f"moments.{label}"] = {
            "second_min": rep.second_min, "second_max": rep.second_max,
            "fourth_max": rep.fourth_max, "assumption_pass": rep.passed,
            "expected": [1.0, m4], "passed": rep.within(1.0, m4),
        }

    for delta in (0.05, 0.2):
        for gname, gen in analysis.MDS_GENERATORS.items():
            rate = analysis.mds_bound_mc(1.0, validator_n, validator_trials, delta,
                                         next(streams), gen)
            limit = delta + 3 * analysis.binomial_se(delta, validator_trials)
            checks[f"mds.{gname}.delta={delta}"] = {"rate": rate, "limit": limit,
                                                    "passed": rate <= limit}
        for gname, gen in analysis.NONNEG_GENERATORS.items():
            rate = analysis.nonneg_bound_mc(gen, 1.0, validator_n, validator_trials, delta,
                                            next(streams))
            limit = delta + 3 * analysis.binomial_se(delta, validator_trials)
            checks[f"nonneg.{gname}.delta={delta}"] = {"rate": rate, "limit": limit,
                                                       "passed": rate <= limit}

    for q in (1.5, 2.0, 3.0, 4.0):
        m, M = geometry.lq_moduli(q)
        lo, hi = geometry.convexity_probe(geometry.LqBall(2, q), geometry.LpNorm(q / (q - 1)),
                                          pairs, next(streams))
        checks[f"convexity.lq={q}"] = {"ratio_min": lo, "ratio_max": hi, "m": m, "M": M,
                                       "passed": lo >= m - 1e-6 and hi <= M + 1e-6}
    ell = geometry.Transformed(2 * np.eye(2), 0.5 * np.eye(2), geometry.L2Ball(2))
    lo, hi = geometry.convexity_probe(ell, geometry.matched_norm(ell, geometry.EuclideanNorm()),
                                      pairs, next(streams))
    checks["convexity.ellipsoid"] = {"ratio_min": lo, "ratio_max": hi, "m": 1.0, "M": 1.0,
                                     "passed": abs(lo - 1) <= 1e-9 and abs(hi - 1) <= 1e-9}
    return checks


def run_report(out_dir: str | Path, checkpoints: list[int] | None = None) -> dict:
    """Recompute curves, fits and figures from stored trace files."""
    out_dir = Path(out_dir)
    report: dict = {"agents": {}}
    curves, fits = {}, {}
    for adir in sorted(p for p in out_dir.iterdir() if (p / "traces").is_dir()):
        files = sorted((adir / "traces").glob("trial_*.csv"))
        traces = [serialise.read_trace_csv(f) for f in files]
        if not traces or len(traces[0]) == 0:
            report["agents"][adir.name] = {"trials": len(traces), "horizon": 0}
            continue
        n = len(traces[0])
        c = analysis.aggregate(traces)
        curves[adir.name] = c
        entry = {"trials": len(traces), "horizon": n, "mean_regret": float(c.mean[-1]),
                 "se_regret": float(c.se[-1])}
        cps = [k for k in (checkpoints or powers_of_two_upto(n)) if k <= n]
        if len(cps) >= 2 and len(traces) >= 2:
            fit = analysis.slope_fit(traces, cps)
            fits[adir.name] = fit
            entry["slope"] = {"slope": fit.slope, "intercept": fit.intercept,
                              "r_squared": fit.r_squared}
        report["agents"][adir.name] = entry
    serialise.atomic_write(out_dir / "report.json", serialise.summary_text(report))
    if curves:
        plotting.regret_curves(curves, out_dir / "report_regret.png")
    if fits:
        plotting.scaling_plot(fits, out_dir / "report_scaling.png")
    return report
