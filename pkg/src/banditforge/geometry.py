"""Action sets, support functions and Bregman divergences.

Every action set exposes ``support(theta)``, returning the value of
``J(theta) = max_{x in X} <x, theta>`` and a maximiser (the gradient of ``J``
wherever it is unique), plus ``gauge``/``residual`` helpers for membership
checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

Q_MIN, Q_MAX = 1.01, 100.0
_TINY = 1e-300


class DegenerateDirectionError(ValueError):
    """The support maximiser is not defined for the zero direction."""


@dataclass(frozen=True)
class SupportEval:
    value: float
    maximizer: np.ndarray


def _require_direction(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if not theta.any():
        raise DegenerateDirectionError("degenerate direction: theta = 0")
    return theta


def _pnorm(a: np.ndarray, p: float, axis=None) -> np.ndarray:
    # scaled to avoid overflow/underflow in |a|^p
    a = np.abs(a)
    scale = np.max(a, axis=axis, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    out = safe * np.sum((a / safe) ** p, axis=axis, keepdims=True) ** (1.0 / p)
    out = np.where(scale > 0, out, 0.0)
    return out.squeeze() if axis is None else np.squeeze(out, axis=axis)


class ActionSet(Protocol):
    dim: int

    def support(self, theta) -> SupportEval: ...

    def support_values(self, thetas: np.ndarray) -> np.ndarray: ...

    def residual(self, x) -> float: ...


@dataclass(frozen=True)
class L2Ball:
    dim: int

    def support(self, theta) -> SupportEval:
        theta = _require_direction(theta)
        norm = float(np.linalg.norm(theta))
        return SupportEval(norm, theta / norm)

    def support_values(self, thetas):
        return np.linalg.norm(np.atleast_2d(thetas), axis=1)

    def gauge(self, x) -> float:
        return float(np.linalg.norm(x))

    def residual(self, x) -> float:
        return max(0.0, self.gauge(x) - 1.0)


@dataclass(frozen=True)
class LqBall:
    """Unit ball of the q-norm; its support function is the conjugate p-norm.

    For q > 2 the ball pokes out of the Euclidean unit ball (up to
    ``d**(1/2 - 1/q)``); it is kept unscaled.
    """

    dim: int
    q: float

    def __post_init__(self):
        if not (Q_MIN <= self.q <= Q_MAX):
            raise ValueError(f"q must lie in [{Q_MIN}, {Q_MAX}], got {self.q}")

    @property
    def p(self) -> float:
        return self.q / (self.q - 1.0)

    def support(self, theta) -> SupportEval:
        theta = _require_direction(theta)
        p = self.p
        a = np.abs(theta)
        a[a < _TINY] = 0.0
        value = float(_pnorm(a, p))
        x = np.sign(theta) * (a / value) ** (p - 1.0)
        return SupportEval(value, x)

    def support_values(self, thetas):
        return _pnorm(np.atleast_2d(thetas), self.p, axis=1)

    def gauge(self, x) -> float:
        return float(_pnorm(np.asarray(x, dtype=float), self.q))

    def residual(self, x) -> float:
        return max(0.0, self.gauge(x) - 1.0)


@dataclass(frozen=True)
class Transformed:
    """The set ``{x : A x in inner}``; ``A_inv`` must be supplied explicitly."""

    A: np.ndarray
    A_inv: np.ndarray
    inner: ActionSet
    validation_samples: int = 2048

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        A_inv = np.asarray(self.A_inv, dtype=float)
        d = self.inner.dim
        if A.shape != (d, d) or A_inv.shape != (d, d):
            raise ValueError(f"A and A_inv must be {d}x{d}")
        if not np.allclose(A @ A_inv, np.eye(d), atol=1e-10, rtol=0):
            raise ValueError("A_inv is not the inverse of A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "A_inv", A_inv)
        # the largest Euclidean norm of a member is max_{|u|=1} J(u)
        rng = np.random.default_rng(0)
        u = rng.standard_normal((self.validation_samples, d))
        u = np.vstack([u, np.eye(d), -np.eye(d)])
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        if np.max(self.support_values(u)) > 1.0 + 1e-9:
            raise ValueError("transformed set is not contained in the unit ball")

    @property
    def dim(self) -> int:
        return self.inner.dim

    def support(self, theta) -> SupportEval:
        theta = _require_direction(theta)
        inner = self.inner.support(self.A_inv.T @ theta)
        return SupportEval(inner.value, self.A_inv @ inner.maximizer)

    def support_values(self, thetas):
        return self.inner.support_values(np.atleast_2d(thetas) @ self.A_inv)

    def gauge(self, x) -> float:
        return self.inner.gauge(self.A @ np.asarray(x, dtype=float))

    def residual(self, x) -> float:
        return max(0.0, self.gauge(x) - 1.0)


@dataclass(frozen=True)
class Finite:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("finite action set must be nonempty")
        _, idx = np.unique(pts, axis=0, return_index=True)
        pts = pts[np.sort(idx)]
        if np.any(np.linalg.norm(pts, axis=1) > 1.0 + 1e-12):
            raise ValueError("finite action set must lie in the unit ball")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def support(self, theta) -> SupportEval:
        theta = _require_direction(theta)
        scores = self.points @ theta
        i = int(np.argmax(scores))  # lowest index on ties
        return SupportEval(float(scores[i]), self.points[i].copy())

    def support_values(self, thetas):
        return np.max(np.atleast_2d(thetas) @ self.points.T, axis=1)

    def residual(self, x) -> float:
        return float(np.min(np.linalg.norm(self.points - np.asarray(x), axis=1)))


def support(action_set: ActionSet, theta) -> SupportEval:
    return action_set.support(theta)


def bregman(action_set: ActionSet, theta_a, theta_b, squared: bool = False) -> float:
    """Bregman divergence of ``J`` (or ``J**2``) between ``theta_a`` and ``theta_b``.

    Uses ``grad J^2 = 2 J grad J`` in squared mode. Round-off negatives are
    clamped to zero.
    """
    theta_a = np.asarray(theta_a, dtype=float)
    sb = action_set.support(theta_b)
    ja = float(action_set.support_values(theta_a)[0])
    jb = sb.value
    diff = theta_a - np.asarray(theta_b, dtype=float)
    if squared:
        d = ja * ja - jb * jb - 2.0 * jb * float(sb.maximizer @ diff)
    else:
        d = ja - jb - float(sb.maximizer @ diff)
    return max(d, 0.0)


# -- norms used to certify strong convexity / smoothness of J^2 --------------


@dataclass(frozen=True)
class EuclideanNorm:
    def __call__(self, x) -> float:
        return float(np.linalg.norm(x))


@dataclass(frozen=True)
class LpNorm:
    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")

    def __call__(self, x) -> float:
        return float(_pnorm(np.asarray(x, dtype=float), self.p))


@dataclass(frozen=True)
class TransformedNorm:
    """``x -> inner(A x)``."""

    A: np.ndarray
    inner: object = field(default_factory=EuclideanNorm)

    def __call__(self, x) -> float:
        return self.inner(np.asarray(self.A, dtype=float) @ np.asarray(x, dtype=float))


def matched_norm(action_set: Transformed, inner_norm) -> TransformedNorm:
    """Norm under which ``Transformed(A, inner)`` inherits the inner moduli.

    The support function of ``{x : A x in X}`` is ``J_X(A^{-T} theta)``, so the
    bracketing norm is ``theta -> inner_norm(A^{-T} theta)``.
    """
    return TransformedNorm(action_set.A_inv.T, inner_norm)


def sample_annulus(rng: np.random.Generator, d: int, size: int,
                   r_min: float = 0.1, r_max: float = 2.0) -> np.ndarray:
    u = rng.standard_normal((size, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * rng.uniform(r_min, r_max, size)[:, None]


def convexity_ratios(action_set: ActionSet, norm, n_pairs: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Sampled ratios ``D_{J^2}(a, b) / |||a - b|||^2``.

    This is ``2 D_{J^2/2} / |||.|||^2``, the quantity bracketed by ``[m, M]``.
    Pairs closer than 1e-3 are resampled.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    d = action_set.dim
    ratios = np.empty(n_pairs)
    filled = 0
    while filled < n_pairs:
        a = sample_annulus(rng, d, 1)[0]
        b = sample_annulus(rng, d, 1)[0]
        dist = norm(a - b)
        if np.linalg.norm(a - b) < 1e-3 or dist == 0:
            continue
        ratios[filled] = bregman(action_set, a, b, squared=True) / dist**2
        filled += 1
    return ratios


def convexity_probe(action_set: ActionSet, norm, n_pairs: int,
                    rng: np.random.Generator) -> tuple[float, float]:
    r = convexity_ratios(action_set, norm, n_pairs, rng)
    return float(r.min()), float(r.max())


def lq_moduli(q: float) -> tuple[float, float]:
    """The ``(m, M)`` bracket claimed for the q-ball with the conjugate norm."""
    p = q / (q - 1.0)
    if q < 2:
        return 1.0, p - 1.0
    return p - 1.0, 1.0


def exploration_basis(action_set: ActionSet) -> np.ndarray:
    """Support maximisers of +-e_1, ..., +-e_d, greedily kept while independent."""
    d = action_set.dim
    chosen: list[np.ndarray] = []
    for i in range(d):
        for sign in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = sign
            x = action_set.support(e).maximizer
            trial = np.array(chosen + [x])
            if np.linalg.matrix_rank(trial, tol=1e-9) == len(trial):
                chosen.append(x)
            if len(chosen) == d:
                return np.array(chosen)
    if len(chosen) < d:
        raise ValueError("action set does not span R^d; no exploration basis")
    return np.array(chosen)
