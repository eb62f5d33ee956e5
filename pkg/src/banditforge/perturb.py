"""Perturbation laws for randomised exploration and audits of their moments.

A perturbation law must be rotationally invariant and, for every unit ``u``,
satisfy ``1 <= E<u, eta>^2 <= K^2`` and ``E<u, eta>^4 <= K^4``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
SPHERE = "sphere"
SCALED_GAUSSIAN = "scaled_gaussian"
KINDS = (GAUSSIAN, SPHERE, SCALED_GAUSSIAN)

_GAUSS_K = 3.0 ** 0.25


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str = GAUSSIAN
    sigma: float = 1.0
    declared_K: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.kind != SCALED_GAUSSIAN and self.sigma != 1.0:
            raise ValueError("sigma only applies to scaled_gaussian")
        if self.declared_K is None:
            # the sphere's directional fourth moment 3d/(d+2) approaches 3
            k = _GAUSS_K * (self.sigma if self.kind == SCALED_GAUSSIAN else 1.0)
            object.__setattr__(self, "declared_K", max(1.0, k))
        if self.declared_K < 1:
            raise ValueError(f"declared_K must be >= 1, got {self.declared_K}")

    @property
    def K(self) -> float:
        return float(self.declared_K)


def sample_many(spec: PerturbationSpec, d: int, size: int,
                rng: np.random.Generator) -> np.ndarray:
    """``size`` independent draws as an ``(size, d)`` array."""
    if d < 1:
        raise ValueError("d must be at least 1")
    g = rng.standard_normal((size, d))
    if spec.kind == GAUSSIAN:
        return g
    if spec.kind == SCALED_GAUSSIAN:
        return spec.sigma * g
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):  # probability zero, guarded anyway
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return g * (np.sqrt(d) / norms)[:, None]


def sample(spec: PerturbationSpec, d: int, rng: np.random.Generator) -> np.ndarray:
    return sample_many(spec, d, 1, rng)[0]


def random_directions(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


@dataclass(frozen=True)
class MomentReport:
    second: np.ndarray
    fourth: np.ndarray
    second_se: np.ndarray
    fourth_se: np.ndarray
    K: float
    passed: bool

    @property
    def second_min(self) -> float:
        return float(self.second.min())

    @property
    def second_max(self) -> float:
        return float(self.second.max())

    @property
    def fourth_max(self) -> float:
        return float(self.fourth.max())

    def within(self, second: float, fourth: float, n_se: float = 5.0) -> bool:
        """Whether every direction matches the given moments within ``n_se`` SEs."""
        return bool(
            np.all(np.abs(self.second - second) <= n_se * self.second_se)
            and np.all(np.abs(self.fourth - fourth) <= n_se * self.fourth_se)
        )


def moment_report(spec: PerturbationSpec, d: int, n_samples: int,
                  n_directions: int, rng: np.random.Generator) -> MomentReport:
    """Monte Carlo estimates of the directional second and fourth moments.

    Passes iff all directions are consistent, within 5 standard errors, with
    ``1 <= m2 <= K^2`` and ``m4 <= K^4``.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    u = random_directions(d, n_directions, rng)
    proj = sample_many(spec, d, n_samples, rng) @ u.T
    p2 = proj**2
    p4 = p2**2
    m2, m4 = p2.mean(axis=0), p4.mean(axis=0)
    se2 = p2.std(axis=0, ddof=1) / np.sqrt(n_samples)
    se4 = p4.std(axis=0, ddof=1) / np.sqrt(n_samples)
    K = spec.K
    passed = bool(
        np.all(m2 + 5 * se2 >= 1.0)
        and np.all(m2 - 5 * se2 <= K**2)
        and np.all(m4 - 5 * se4 <= K**4)
    )
    return MomentReport(m2, m4, se2, se4, K, passed)
