"""Shared learner contracts: specs, fingerprints, fitted models, predict.

Predictions are computed with row-stable reductions (sums only along
feature or tree axes), so predicting one row at a time is bitwise
identical to predicting a whole matrix. The transform engine's oracle
equivalence tests rely on this.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from ..errors import FitError, ValidationError


class LearnerKind(Enum):
    RIDGE = "ridge"
    RIDGE_CV = "ridge_cv"
    FOREST = "forest"
    SVR = "svr"


_REQUIRED_KEYS = {
    LearnerKind.RIDGE: ("lam",),
    LearnerKind.RIDGE_CV: ("lambda_grid", "k"),
    LearnerKind.FOREST: ("n_trees", "mtry", "min_node_size"),
    LearnerKind.SVR: ("c", "epsilon", "sigma", "tol", "max_iter"),
}

_LABELS = {
    LearnerKind.RIDGE: "Ridge",
    LearnerKind.RIDGE_CV: "RidgeCV",
    LearnerKind.FOREST: "RF",
    LearnerKind.SVR: "SVM",
}


@dataclass(frozen=True)
class LearnerSpec:
    """A fully resolved learner configuration.

    ``hyperparams`` must contain every required key for the kind; the
    classmethod constructors fill in defaults.
    """

    kind: LearnerKind
    hyperparams: dict
    seed: int = 0

    def __post_init__(self) -> None:
        missing = [k for k in _REQUIRED_KEYS[self.kind] if k not in self.hyperparams]
        if missing:
            raise ValidationError(
                f"{self.kind.value} spec missing hyperparams: {', '.join(missing)}"
            )

    @classmethod
    def ridge(cls, lam: float = 10.0, seed: int = 0) -> "LearnerSpec":
        return cls(LearnerKind.RIDGE, {"lam": float(lam)}, seed)

    @classmethod
    def ridge_cv(cls, lambda_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0),
                 k: int = 10, seed: int = 0) -> "LearnerSpec":
        return cls(LearnerKind.RIDGE_CV,
                   {"lambda_grid": tuple(float(l) for l in lambda_grid), "k": int(k)}, seed)

    @classmethod
    def forest(cls, n_trees: int = 500, mtry: int = 0, min_node_size: int = 5,
               seed: int = 0) -> "LearnerSpec":
        """mtry = 0 selects the regression default ceil(p / 3) at fit time."""
        return cls(LearnerKind.FOREST,
                   {"n_trees": int(n_trees), "mtry": int(mtry),
                    "min_node_size": int(min_node_size)}, seed)

    @classmethod
    def svr(cls, c: float = 1.0, epsilon: float = 0.1, sigma: float = 0.2,
            tol: float = 1e-3, max_iter: int = 200_000, seed: int = 0) -> "LearnerSpec":
        return cls(LearnerKind.SVR,
                   {"c": float(c), "epsilon": float(epsilon), "sigma": float(sigma),
                    "tol": float(tol), "max_iter": int(max_iter)}, seed)

    @property
    def label(self) -> str:
        return _LABELS[self.kind]

    def key(self) -> tuple:
        """Canonical hashable identity used for grouping results."""
        items = tuple(sorted((k, _freeze(v)) for k, v in self.hyperparams.items()))
        return (self.kind.value, items, self.seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "hyperparams": _jsonable(self.hyperparams),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, doc: dict) -> "LearnerSpec":
        hp = dict(doc["hyperparams"])
        if "lambda_grid" in hp:
            hp["lambda_grid"] = tuple(hp["lambda_grid"])
        return cls(LearnerKind(doc["kind"]), hp, int(doc.get("seed", 0)))


def _freeze(value: Any) -> Any:
    return tuple(value) if isinstance(value, (list, tuple)) else value


def _jsonable(hp: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in hp.items()}


@dataclass(frozen=True)
class TrainFingerprint:
    """Identity of the rows a model was trained on.

    Keeps the actual (task_id, row ids) so leakage audits can check
    disjointness mechanically; ``digest`` is the stable hash of both.
    """

    task_id: str
    row_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.task_id.encode("utf-8"))
        for rid in self.row_ids:
            h.update(b"\x1f")
            h.update(rid.encode("utf-8"))
        return h.hexdigest()

    def disjoint_from(self, row_ids) -> bool:
        return not set(self.row_ids) & set(row_ids)


EMPTY_FINGERPRINT = TrainFingerprint(task_id="", row_ids=())


@dataclass(frozen=True)
class Standardizer:
    """Per-feature zero-mean unit-variance scaling; constant columns map to 0."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        return cls(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


@dataclass(frozen=True)
class FittedModel:
    """A frozen fitted learner: spec echo, opaque state, and provenance."""

    spec: LearnerSpec
    state: Any
    feature_count: int
    train_fingerprint: TrainFingerprint = EMPTY_FINGERPRINT
    standardization: Standardizer | None = None

    @property
    def kind(self) -> LearnerKind:
        return self.spec.kind


def _check_predict_input(model: FittedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("predict expects a 2-d matrix")
    if X.shape[1] != model.feature_count:
        raise ValidationError(
            f"predict: input has {X.shape[1]} columns, model expects {model.feature_count}"
        )
    if X.size and not np.isfinite(X).all():
        raise ValidationError("predict: input contains non-finite values")
    return X


def predict(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """One finite prediction per row; a pure function of (model, X)."""
    from . import forest, ridge, svr

    X = _check_predict_input(model, X)
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if model.standardization is not None:
        X = model.standardization.transform(X)
    if model.kind in (LearnerKind.RIDGE, LearnerKind.RIDGE_CV):
        return ridge.predict_state(model.state, X)
    if model.kind is LearnerKind.FOREST:
        return forest.predict_state(model.state, X)
    if model.kind is LearnerKind.SVR:
        return svr.predict_state(model.state, X)
    raise FitError(f"unknown model kind {model.kind}")


def fit_learner(spec: LearnerSpec, X: np.ndarray, y: np.ndarray,
                fingerprint: TrainFingerprint = EMPTY_FINGERPRINT,
                seed: int | None = None, workers: int = 1) -> FittedModel:
    """Fit any learner kind from its spec; ``seed`` overrides spec.seed."""
    from . import forest, ridge, svr

    hp = spec.hyperparams
    use_seed = spec.seed if seed is None else seed
    if spec.kind is LearnerKind.RIDGE:
        return ridge.fit_ridge(X, y, hp["lam"], fingerprint=fingerprint, spec=spec)
    if spec.kind is LearnerKind.RIDGE_CV:
        return ridge.fit_ridge_cv(X, y, hp["lambda_grid"], hp["k"], use_seed,
                                  fingerprint=fingerprint, spec=spec)
    if spec.kind is LearnerKind.FOREST:
        return forest.fit_forest(X, y, n_trees=hp["n_trees"], mtry=hp["mtry"],
                                 min_node_size=hp["min_node_size"], seed=use_seed,
                                 fingerprint=fingerprint, spec=spec, workers=workers)
    if spec.kind is LearnerKind.SVR:
        return svr.fit_svr(X, y, c=hp["c"], epsilon=hp["epsilon"], sigma=hp["sigma"],
                           tol=hp["tol"], max_iter=hp["max_iter"],
                           fingerprint=fingerprint, spec=spec)
    raise FitError(f"unknown learner kind {spec.kind}")


def check_fit_input(X: np.ndarray, y: np.ndarray, min_rows: int = 1) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise FitError("fit expects a 2-d feature matrix")
    if y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise FitError(f"dimension mismatch: X has {X.shape[0]} rows, y has {y.shape[0]}")
    if X.shape[0] < min_rows:
        raise FitError(f"need at least {min_rows} rows, got {X.shape[0]}")
    if X.size and not np.isfinite(X).all():
        raise FitError("fit: features contain non-finite values")
    if y.size and not np.isfinite(y).all():
        raise FitError("fit: targets contain non-finite values")
    return X, y
