"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved by sequential pairwise optimization over the 2l box
variables (alpha, alpha*): at each step the maximal-violating pair is
selected and optimized in closed form under the equality constraint.
Termination requires the KKT violation gap to fall below ``tol``; hitting
the iteration cap raises instead of returning silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, FitError, ValidationError
from .base import (EMPTY_FINGERPRINT, FittedModel, LearnerSpec, Standardizer,
                   TrainFingerprint, check_fit_input)


def rbf_kernel(x: np.ndarray, z: np.ndarray, sigma: float) -> float:
    """k(x, z) = exp(-sigma * ||x - z||^2) for two vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise ValidationError(f"kernel input length mismatch: {x.shape[0]} vs {z.shape[0]}")
    if sigma <= 0:
        raise ValidationError(f"kernel width must be positive, got {sigma}")
    d = x - z
    return float(np.exp(-sigma * (d * d).sum()))


def rbf_gram(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    """Gram matrix K[i, j] = exp(-sigma * ||A_i - B_j||^2).

    Computed one B-row at a time so each output row's accumulation order
    is independent of the batch size (bitwise row stability).
    """
    K = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    for j in range(B.shape[0]):
        d = A - B[j]
        K[:, j] = np.exp(-sigma * (d * d).sum(axis=1))
    return K


@dataclass(frozen=True)
class SvrState:
    support: np.ndarray
    dual_coef: np.ndarray
    bias: float
    sigma: float
    n_iter: int
    kkt_gap: float


def predict_state(state: SvrState, X: np.ndarray) -> np.ndarray:
    if state.support.shape[0] == 0:
        return np.full(X.shape[0], state.bias, dtype=np.float64)
    K = rbf_gram(X, state.support, state.sigma)
    return (K * state.dual_coef).sum(axis=1) + state.bias


def dual_objective(K: np.ndarray, y: np.ndarray, epsilon: float, a: np.ndarray) -> float:
    """Objective (minimized) of the 2l-variable dual at point ``a``."""
    l = len(y)
    beta = a[:l] - a[l:]
    return float(0.5 * beta @ K @ beta + epsilon * a.sum() - y @ beta)


def _smo(K: np.ndarray, y: np.ndarray, c: float, epsilon: float, tol: float,
         max_iter: int) -> tuple[np.ndarray, float, int, float]:
    """Returns (a, bias, n_iter, kkt_gap) for the 2l-variable dual."""
    l = len(y)
    a = np.zeros(2 * l, dtype=np.float64)
    u = np.concatenate([np.ones(l), -np.ones(l)])
    Kbeta = np.zeros(l, dtype=np.float64)

    def gradient() -> np.ndarray:
        return np.concatenate([Kbeta + epsilon - y, -Kbeta + epsilon + y])

    gap = np.inf
    m = M = 0.0
    it = 0
    while True:
        g = gradient()
        vals = -u * g
        up = ((u > 0) & (a < c)) | ((u < 0) & (a > 0))
        low = ((u > 0) & (a > 0)) | ((u < 0) & (a < c))
        if not up.any() or not low.any():
            gap = 0.0
            break
        m = float(np.max(vals[up]))
        M = float(np.min(vals[low]))
        gap = float(m - M)
        if gap <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SVR solver exhausted {max_iter} iterations; KKT gap {gap:.3e} > tol {tol:.1e}"
            )
        i = int(np.flatnonzero(up)[np.argmax(vals[up])])
        j = int(np.flatnonzero(low)[np.argmin(vals[low])])
        ri, rj = i % l, j % l
        sign = 1.0 if (i < l) == (j < l) else -1.0
        quad = K[ri, ri] + K[rj, rj] - 2.0 * sign * K[ri, rj]
        if quad <= 0.0:
            quad = 1e-12
        old_i, old_j = a[i], a[j]
        if u[i] != u[j]:
            delta = (-g[i] - g[j]) / quad
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
            if diff > 0:
                if ai > c:
                    ai, aj = c, c - diff
            else:
                if aj > c:
                    aj, ai = c, c + diff
        else:
            delta = (g[i] - g[j]) / quad
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > c:
                if ai > c:
                    ai, aj = c, total - c
                elif aj > c:
                    aj, ai = c, total - c
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                elif ai < 0:
                    ai, aj = 0.0, total
        a[i], a[j] = ai, aj
        Kbeta += K[:, ri] * (u[i] * (ai - old_i)) + K[:, rj] * (u[j] * (aj - old_j))
        it += 1

    g = gradient()
    vals = -u * g
    free = (a > 0) & (a < c)
    if free.any():
        bias = float(np.mean(vals[free]))
    else:
        bias = float(0.5 * (m + M))
    return a, bias, it, gap


def fit_svr(X: np.ndarray, y: np.ndarray, *, c: float = 1.0, epsilon: float = 0.1,
            sigma: float = 0.2, tol: float = 1e-3, max_iter: int = 200_000,
            standardize: bool = True,
            fingerprint: TrainFingerprint = EMPTY_FINGERPRINT,
            spec: LearnerSpec | None = None) -> FittedModel:
    X, y = check_fit_input(X, y, min_rows=2)
    if c <= 0:
        raise FitError(f"C must be positive, got {c}")
    if epsilon < 0:
        raise FitError(f"epsilon must be nonnegative, got {epsilon}")
    if sigma <= 0:
        raise FitError(f"kernel width must be positive, got {sigma}")
    scaler = Standardizer.fit(X) if standardize else None
    Z = scaler.transform(X) if scaler is not None else X
    K = rbf_gram(Z, Z, sigma)
    a, bias, n_iter, gap = _smo(K, y, float(c), float(epsilon), float(tol), int(max_iter))
    l = len(y)
    beta = a[:l] - a[l:]
    sv = beta != 0.0
    if spec is None:
        spec = LearnerSpec.svr(c=c, epsilon=epsilon, sigma=sigma, tol=tol, max_iter=max_iter)
    state = SvrState(support=Z[sv].copy(), dual_coef=beta[sv].copy(), bias=bias,
                     sigma=float(sigma), n_iter=n_iter, kkt_gap=gap)
    return FittedModel(spec=spec, state=state, feature_count=X.shape[1],
                       train_fingerprint=fingerprint, standardization=scaler)
