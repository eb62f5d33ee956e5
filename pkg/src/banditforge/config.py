"""Experiment configuration: an INI document with flat sections.

::

    [experiment]
    horizon = 1024
    trials = 8
    master_seed = 0
    workers = 1
    diagnostics = false
    checkpoints = 256, 512, 1024

    [instance]
    d = 2
    theta_norm = 0.8            ; or: theta_star = 0.8, 0
    action_set = lq             ; l2 | lq | finite | ellipsoid
    q = 3
    noise = gaussian            ; gaussian | uniform
    noise_scale = 0.5           ; S
    bound = 1.0                 ; R

    [agent.ts]
    kind = randomised           ; randomised | oful | phased_etc | uniform
    perturbation = gaussian     ; gaussian | sphere | scaled_gaussian
    lambda = 1.0
    delta = 0.01

Validation collects every problem rather than stopping at the first one.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import agents, env, geometry, perturb


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _matrix(text: str) -> list[list[float]]:
    return [_floats(row) for row in text.split(";") if row.strip()]


EXPERIMENT_KEYS = {
    "horizon": int, "trials": int, "master_seed": int, "workers": int,
    "diagnostics": _bool, "checkpoints": _ints, "output": str,
}
INSTANCE_KEYS = {
    "d": int, "theta_star": _floats, "theta_norm": float, "action_set": str,
    "q": float, "points": _matrix, "transform": _matrix, "inner_set": str,
    "noise": str, "noise_scale": float, "bound": float,
}
AGENT_KEYS = {
    "kind": str, "perturbation": str, "sigma": float, "declared_k": float,
    "inflation": float, "lambda": float, "delta": float, "restarts": int, "iters": int,
}


@dataclass
class ExperimentConfig:
    instance: env.BanditInstance
    agents: dict[str, agents.AgentConfig]
    horizon: int
    trials: int
    master_seed: int = 0
    workers: int = 1
    diagnostics: bool = False
    checkpoints: list[int] = field(default_factory=list)
    output: str | None = None
    source: str = ""


def _typed(section: str, raw: dict, schema: dict, errors: list[str]) -> dict:
    out = {}
    for key, text in raw.items():
        path = f"{section}.{key}"
        if key not in schema:
            errors.append(f"{path}: unknown key")
            continue
        try:
            out[key] = schema[key](text)
        except ValueError as exc:
            errors.append(f"{path}: type mismatch ({exc})")
    return out


def _check(cond: bool, path: str, msg: str, errors: list[str]) -> bool:
    if not cond:
        errors.append(f"{path}: {msg}")
    return cond


def _build_set(v: dict, d: int, errors: list[str]):
    kind = v.get("action_set", "l2")
    path = "instance"

    def ball(name: str):
        if name == "l2":
            return geometry.L2Ball(d)
        if name == "lq":
            q = v.get("q")
            if not _check(q is not None, f"{path}.q", "required for lq action sets", errors):
                return None
            if not _check(geometry.Q_MIN <= q <= geometry.Q_MAX, f"{path}.q",
                          f"q must lie in [{geometry.Q_MIN}, {geometry.Q_MAX}]", errors):
                return None
            return geometry.LqBall(d, q)
        errors.append(f"{path}.inner_set: unknown ball {name!r}")
        return None

    if kind in ("l2", "lq"):
        return ball(kind)
    if kind == "finite":
        pts = v.get("points")
        if not _check(pts is not None, f"{path}.points", "required for finite sets", errors):
            return None
        if not _check(all(len(p) == d for p in pts), f"{path}.points",
                      f"every point needs {d} coordinates", errors):
            return None
        try:
            return geometry.Finite(np.array(pts))
        except ValueError as exc:
            errors.append(f"{path}.points: {exc}")
            return None
    if kind == "ellipsoid":
        A = v.get("transform")
        if not _check(A is not None, f"{path}.transform", "required for ellipsoid sets", errors):
            return None
        A = np.array(A, dtype=float)
        if not _check(A.shape == (d, d), f"{path}.transform", f"must be {d}x{d}", errors):
            return None
        inner = ball(v.get("inner_set", "l2"))
        if inner is None:
            return None
        try:
            return geometry.Transformed(A, np.linalg.inv(A), inner)
        except (ValueError, np.linalg.LinAlgError) as exc:
            errors.append(f"{path}.transform: {exc}")
            return None
    errors.append(f"{path}.action_set: unknown action set {kind!r}")
    return None


def _build_theta(v: dict, d: int, R: float, seed: int, errors: list[str]):
    path = "instance"
    if ("theta_star" in v) == ("theta_norm" in v):
        errors.append(f"{path}.theta_star: give exactly one of theta_star or theta_norm")
        return None
    if "theta_star" in v:
        theta = np.array(v["theta_star"])
        if not _check(theta.shape == (d,), f"{path}.theta_star", f"needs {d} entries", errors):
            return None
    else:
        rho = v["theta_norm"]
        if not _check(rho > 0, f"{path}.theta_norm", "must be positive", errors):
            return None
        u = np.random.default_rng(np.random.SeedSequence([int(seed), 2**32 - 1])).standard_normal(d)
        theta = rho * u / np.linalg.norm(u)
    ok = _check(bool(theta.any()), f"{path}.theta_star", "must be nonzero", errors)
    ok &= _check(float(np.linalg.norm(theta)) <= R * (1 + 1e-12), f"{path}.theta_star",
                 f"norm exceeds bound R = {R}", errors)
    return theta if ok else None


def _build_agent(name: str, a: dict, S: float, R: float, errors: list[str]):
    path = f"agent.{name}"
    n_before = len(errors)
    kind = a.get("kind", agents.RANDOMISED)
    _check(kind in agents.KINDS, f"{path}.kind", f"must be one of {agents.KINDS}", errors)
    pkind = a.get("perturbation", perturb.GAUSSIAN)
    _check(pkind in perturb.KINDS, f"{path}.perturbation",
           f"must be one of {perturb.KINDS}", errors)
    sigma = a.get("sigma", 1.0)
    _check(sigma > 0, f"{path}.sigma", "must be positive", errors)
    _check("sigma" not in a or pkind == perturb.SCALED_GAUSSIAN, f"{path}.sigma",
           "only valid with perturbation = scaled_gaussian", errors)
    declared = a.get("declared_k")
    _check(declared is None or declared >= 1, f"{path}.declared_k", "must be >= 1", errors)
    lam = a.get("lambda", 1.0)
    _check(lam > 0, f"{path}.lambda", "must be positive", errors)
    delta = a.get("delta", 0.05)
    _check(0 < delta < 1, f"{path}.delta", "must lie in (0, 1)", errors)
    inflation = a.get("inflation", 1.0)
    _check(inflation >= 1, f"{path}.inflation", "must be >= 1", errors)
    restarts, iters = a.get("restarts", 16), a.get("iters", 200)
    _check(restarts >= 1, f"{path}.restarts", "must be positive", errors)
    _check(iters >= 1, f"{path}.iters", "must be positive", errors)
    if len(errors) > n_before:
        return None
    spec = perturb.PerturbationSpec(pkind, sigma, declared)
    return agents.AgentConfig(kind=kind, perturbation=spec, inflation=inflation,
                              restarts=restarts, iters=iters, lam=lam, delta=delta,
                              R=R, S=S)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    parser = configparser.ConfigParser(strict=True, inline_comment_prefixes=(";", "#"),
                                       interpolation=None)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError([f"{exc.section}.{exc.option}: duplicate key"]) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError([f"{exc.section}: duplicate section"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"syntax error: {exc}"]) from exc

    errors: list[str] = []
    sections = parser.sections()
    for s in sections:
        if s not in ("experiment", "instance") and not s.startswith("agent."):
            errors.append(f"{s}: unknown section")
    for required in ("experiment", "instance"):
        if required not in sections:
            errors.append(f"{required}: missing section")
    agent_sections = [s for s in sections if s.startswith("agent.")]
    if not agent_sections:
        errors.append("agent: at least one [agent.<name>] section is required")
    if errors and ("experiment" not in sections or "instance" not in sections):
        raise ConfigError(errors)

    x = _typed("experiment", dict(parser["experiment"]), EXPERIMENT_KEYS, errors)
    v = _typed("instance", dict(parser["instance"]), INSTANCE_KEYS, errors)
    raw_agents = {s.split(".", 1)[1]: _typed(s, dict(parser[s]), AGENT_KEYS, errors)
                  for s in agent_sections}

    for key in ("horizon", "trials"):
        _check(key in x, f"experiment.{key}", "required", errors)
    horizon, trials = x.get("horizon", 0), x.get("trials", 1)
    _check(horizon >= 0, "experiment.horizon", "must be nonnegative", errors)
    _check(trials >= 1, "experiment.trials", "must be positive", errors)
    seed = x.get("master_seed", 0)
    _check(0 <= seed < 2**64, "experiment.master_seed", "must be an unsigned 64-bit integer",
           errors)
    workers = x.get("workers", 1)
    _check(workers >= 1, "experiment.workers", "must be positive", errors)
    cps = x.get("checkpoints", [])
    _check(all(0 < c <= horizon for c in cps), "experiment.checkpoints",
           "must lie in [1, horizon]", errors)

    d = v.get("d")
    if not _check(d is not None and d >= 1, "instance.d", "required positive integer", errors):
        raise ConfigError(errors)
    S = v.get("noise_scale", 1.0)
    _check(S >= 0 and math.isfinite(S), "instance.noise_scale", "must be nonnegative", errors)
    R = v.get("bound", 1.0)
    _check(R > 0, "instance.bound", "must be positive", errors)
    noise = v.get("noise", env.GAUSSIAN_NOISE)
    _check(noise in (env.GAUSSIAN_NOISE, env.UNIFORM_NOISE), "instance.noise",
           "must be gaussian or uniform", errors)
    action_set = _build_set(v, d, errors)
    theta = _build_theta(v, d, R, seed, errors)
    built = {name: _build_agent(name, a, S, R, errors) for name, a in raw_agents.items()}

    if errors:
        raise ConfigError(errors)
    try:
        instance = env.BanditInstance(theta, action_set, S, noise, R)
    except ValueError as exc:
        raise ConfigError([f"instance: {exc}"]) from exc
    return ExperimentConfig(instance=instance, agents=built, horizon=horizon, trials=trials,
                            master_seed=seed, workers=workers,
                            diagnostics=x.get("diagnostics", False), checkpoints=cps,
                            output=x.get("output"), source=text)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


PRESETS = {
    "smooth": """\
[experiment]
horizon = 2048
trials = 20
master_seed = 0
checkpoints = 256, 512, 1024, 2048

[instance]
d = 3
theta_norm = 0.8
action_set = lq
q = 3
noise = gaussian
noise_scale = 0.5
bound = 1.0

[agent.ts]
kind = randomised
perturbation = gaussian
lambda = 1.0
delta = 0.01

[agent.oful]
kind = oful
lambda = 1.0
delta = 0.01
restarts = 4
iters = 50
""",
    "sphere": """\
[experiment]
horizon = 2048
trials = 20
master_seed = 0
checkpoints = 256, 512, 1024, 2048

[instance]
d = 2
theta_norm = 0.8
action_set = l2
noise = gaussian
noise_scale = 0.5
bound = 1.0

[agent.ts]
kind = randomised
lambda = 1.0
delta = 0.01

[agent.etc]
kind = phased_etc
lambda = 1.0
delta = 0.01

[agent.uniform]
kind = uniform
""",
    # finite sets are never absorbing; this is a demonstration, not a guarantee
    "trap": """\
[experiment]
horizon = 2048
trials = 20
master_seed = 0

[instance]
d = 2
theta_star = 0.6, 0.5
action_set = finite
points = 1, 0; 0, 1; 0.7, 0.7
noise = gaussian
noise_scale = 0.5
bound = 1.0

[agent.ts]
kind = randomised
lambda = 1.0
delta = 0.01

[agent.ts_inflated]
kind = randomised
inflation = 3.0
lambda = 1.0
delta = 0.01
""",
}
