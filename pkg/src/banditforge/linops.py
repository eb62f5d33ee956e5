"""Incrementally maintained positive-definite algebra for regularised least squares.

The design matrix ``V_t = lambda*I + sum x_i x_i^T`` is stored together with a
lower Cholesky factor ``L`` (``L @ L.T == V_t``) that is updated in O(d^2) per
observation. The inverse square root used for perturbations is the triangular
whitening map ``W = L^{-T}``, which satisfies ``W @ W.T == V^{-1}``. Any two
square roots of ``V^{-1}`` differ by an orthogonal factor, so for a
rotationally invariant perturbation ``eta`` the law of ``W @ eta`` is the same
as under the symmetric root ``V^{-1/2}``.

Hot loops are compiled with numba; everything else is plain numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

REFACTOR_EVERY = 256


class NumericalError(ArithmeticError):
    """Raised when the Cholesky factor cannot be maintained or rebuilt."""


@njit(cache=True)
def _forward(L, b):
    # solve L z = b
    d = b.shape[0]
    z = np.empty(d)
    for i in range(d):
        acc = b[i]
        for j in range(i):
            acc -= L[i, j] * z[j]
        z[i] = acc / L[i, i]
    return z


@njit(cache=True)
def _backward_t(L, b):
    # solve L^T w = b
    d = b.shape[0]
    w = np.empty(d)
    for i in range(d - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, d):
            acc -= L[j, i] * w[j]
        w[i] = acc / L[i, i]
    return w


@njit(cache=True)
def _update_kernel(L, gram, response, x, y):
    d = x.shape[0]
    z = _forward(L, x)
    gain = 0.0
    for i in range(d):
        gain += z[i] * z[i]

    Ln = L.copy()
    w = x.copy()
    ok = True
    for k in range(d):
        lkk = Ln[k, k]
        r = math.sqrt(lkk * lkk + w[k] * w[k])
        c = r / lkk
        s = w[k] / lkk
        Ln[k, k] = r
        for i in range(k + 1, d):
            Ln[i, k] = (Ln[i, k] + s * w[i]) / c
            w[i] = c * w[i] - s * Ln[i, k]
        if not (r > 0.0) or not math.isfinite(r):
            ok = False

    gram_new = gram + np.outer(x, x)
    response_new = response + y * x
    estimate = _backward_t(Ln, _forward(Ln, response_new))
    return Ln, gram_new, response_new, estimate, gain, ok


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive-definite matrix with a cached lower Cholesky factor."""

    entries: np.ndarray
    factor: np.ndarray
    log_det: float
    updates_since_refactor: int = 0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def scaled_identity(cls, d: int, lam: float) -> "SpdMatrix":
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        if not lam > 0:
            raise ValueError(f"regulariser must be positive, got {lam}")
        return cls(
            entries=_frozen(lam * np.eye(d)),
            factor=_frozen(math.sqrt(lam) * np.eye(d)),
            log_det=d * math.log(lam),
        )

    @classmethod
    def from_dense(cls, entries: np.ndarray) -> "SpdMatrix":
        entries = np.array(entries, dtype=float)
        entries = 0.5 * (entries + entries.T)
        try:
            L = np.linalg.cholesky(entries)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("matrix is not positive definite") from exc
        return cls(
            entries=_frozen(entries),
            factor=_frozen(L),
            log_det=float(2.0 * np.sum(np.log(np.diag(L)))),
        )


@dataclass(frozen=True)
class SufficientStats:
    """Regularised least-squares statistics ``(V_t, b_t, theta_hat_t, t)``.

    ``last_gain`` is ``||x_t||^2`` in the pre-update inverse metric for the most
    recent observation (zero before the first update).
    """

    gram: SpdMatrix
    response: np.ndarray
    estimate: np.ndarray
    step: int
    lam: float
    last_gain: float = 0.0

    @classmethod
    def initial(cls, d: int, lam: float) -> "SufficientStats":
        return cls(
            gram=SpdMatrix.scaled_identity(d, lam),
            response=_frozen(np.zeros(d)),
            estimate=_frozen(np.zeros(d)),
            step=0,
            lam=float(lam),
        )

    @property
    def dim(self) -> int:
        return self.gram.dim


def _check_vector(v: np.ndarray, d: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise ValueError(f"{name} must have shape ({d},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def rank_one_update(stats: SufficientStats, x, y: float) -> SufficientStats:
    """Return the statistics after observing reward ``y`` for action ``x``."""
    x = _check_vector(x, stats.dim, "x")
    y = float(y)
    if not math.isfinite(y):
        raise ValueError("y must be finite")
    if not x.any():
        return replace(stats, step=stats.step + 1, last_gain=0.0)

    gram = stats.gram
    L, entries, response, estimate, gain, ok = _update_kernel(
        gram.factor, gram.entries, stats.response, x, y
    )
    since = gram.updates_since_refactor + 1
    if ok and since < REFACTOR_EVERY:
        log_det = gram.log_det + math.log1p(gain)
    else:
        try:
            L = np.linalg.cholesky(entries)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"refactorisation failed at step {stats.step + 1}"
            ) from exc
        log_det = float(2.0 * np.sum(np.log(np.diag(L))))
        estimate = _backward_t(L, _forward(L, response))
        since = 0

    return SufficientStats(
        gram=SpdMatrix(_frozen(entries), _frozen(L), log_det, since),
        response=_frozen(response),
        estimate=_frozen(estimate),
        step=stats.step + 1,
        lam=stats.lam,
        last_gain=float(gain),
    )


def whiten(m: SpdMatrix, v) -> np.ndarray:
    """Apply ``W = L^{-T}``; ``W @ W.T`` is the inverse of ``m``."""
    v = _check_vector(v, m.dim, "v")
    diag = np.diag(m.factor)
    if not np.all(diag > 0):
        raise NumericalError("singular factor")
    return _backward_t(m.factor, v)


def whiten_many(m: SpdMatrix, vs: np.ndarray) -> np.ndarray:
    """Row-wise :func:`whiten` for an ``(n, d)`` batch."""
    from scipy.linalg import solve_triangular

    vs = np.asarray(vs, dtype=float)
    return solve_triangular(m.factor, vs.T, lower=True, trans="T").T


def inverse_quad(m: SpdMatrix, v) -> float:
    """``v^T m^{-1} v``."""
    z = _forward(m.factor, np.asarray(v, dtype=float))
    return float(z @ z)


def weighted_norms(m: SpdMatrix, v) -> tuple[float, float]:
    """Return ``(||v||_m, ||v||_{m^{-1}})``."""
    v = _check_vector(v, m.dim, "v")
    quad = float(v @ m.entries @ v)
    return math.sqrt(max(quad, 0.0)), math.sqrt(inverse_quad(m, v))


def solve(m: SpdMatrix, b) -> np.ndarray:
    """``m^{-1} b`` through the cached factor."""
    b = np.asarray(b, dtype=float)
    return _backward_t(m.factor, _forward(m.factor, b))
