"""Linear regression with an L2 penalty on the coefficients.

The intercept is never penalized. Features are standardized internally by
default so the penalty weight is scale-meaningful; predictions are always
returned on the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import make_fold_plan
from ..errors import FitError, ValidationError
from .base import (EMPTY_FINGERPRINT, FittedModel, LearnerSpec, Standardizer,
                   TrainFingerprint, check_fit_input)


@dataclass(frozen=True)
class RidgeState:
    coef: np.ndarray
    intercept: float
    lam: float


def predict_state(state: RidgeState, X: np.ndarray) -> np.ndarray:
    # (X * coef).sum(axis=1) keeps each row's accumulation independent of
    # the batch size, unlike BLAS matvec.
    return (X * state.coef).sum(axis=1) + state.intercept


def _solve_centered(Zc: np.ndarray, yc: np.ndarray, lam: float) -> np.ndarray:
    p = Zc.shape[1]
    if lam > 0.0:
        gram = Zc.T @ Zc + lam * np.eye(p)
        coef = np.linalg.solve(gram, Zc.T @ yc)
    else:
        # Minimum-norm least squares; rank-deficient designs interpolate
        # instead of erroring, matching the unpenalized-intercept objective.
        coef, *_ = np.linalg.lstsq(Zc, yc, rcond=None)
    if not np.isfinite(coef).all():
        raise FitError("singular system at lambda = 0")
    return coef


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float, *, standardize: bool = True,
              fingerprint: TrainFingerprint = EMPTY_FINGERPRINT,
              spec: LearnerSpec | None = None) -> FittedModel:
    """Minimize ||y - b0 - X beta||^2 + lam * ||beta||^2."""
    X, y = check_fit_input(X, y, min_rows=2)
    if lam < 0:
        raise FitError(f"penalty weight must be nonnegative, got {lam}")
    scaler = Standardizer.fit(X) if standardize else None
    Z = scaler.transform(X) if scaler is not None else X
    xm = Z.mean(axis=0)
    ym = y.mean()
    coef = _solve_centered(Z - xm, y - ym, float(lam))
    intercept = float(ym - xm @ coef)
    if spec is None:
        spec = LearnerSpec.ridge(lam=float(lam))
    state = RidgeState(coef=coef, intercept=intercept, lam=float(lam))
    return FittedModel(spec=spec, state=state, feature_count=X.shape[1],
                       train_fingerprint=fingerprint, standardization=scaler)


def _cv_rmse(X: np.ndarray, y: np.ndarray, lam: float, plan, standardize: bool) -> float:
    errors = []
    for f in range(plan.n_splits):
        train, test = plan.split(f)
        if len(train) < 2 or len(test) == 0:
            raise FitError(f"degenerate internal fold {f}: {len(train)} train rows")
        model = fit_ridge(X[train], y[train], lam, standardize=standardize)
        Z = model.standardization.transform(X[test]) if model.standardization else X[test]
        pred = predict_state(model.state, Z)
        errors.append(math.sqrt(float(np.mean((pred - y[test]) ** 2))))
    return float(np.mean(errors))


def fit_ridge_cv(X: np.ndarray, y: np.ndarray, lambda_grid, k: int, seed: int, *,
                 standardize: bool = True,
                 fingerprint: TrainFingerprint = EMPTY_FINGERPRINT,
                 spec: LearnerSpec | None = None) -> FittedModel:
    """Pick the grid penalty with minimal internal-CV RMSE, then refit on all rows.

    Ties in CV RMSE resolve to the larger penalty.
    """
    X, y = check_fit_input(X, y, min_rows=2)
    grid = tuple(float(l) for l in lambda_grid)
    if not grid:
        raise FitError("lambda grid must be non-empty")
    try:
        plan = make_fold_plan(X.shape[0], k, seed)
    except ValidationError as exc:
        raise FitError(f"internal cross-validation impossible: {exc}") from exc
    scored = [(_cv_rmse(X, y, lam, plan, standardize), -lam) for lam in grid]
    best_lam = -min(scored)[1]
    if spec is None:
        spec = LearnerSpec.ridge_cv(lambda_grid=grid, k=k, seed=seed)
    return fit_ridge(X, y, best_lam, standardize=standardize,
                     fingerprint=fingerprint, spec=spec)
