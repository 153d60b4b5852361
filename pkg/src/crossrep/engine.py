"""Stage-1 model banks and extrinsic representation construction.

The extrinsic representation of a task's examples is the matrix of
predictions produced by the other tasks' stage-1 models: one column per
source model, the task's own model always excluded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .data import CollectionMode, SplitPlan, Task, TaskCollection
from .errors import FitError, IngestionError, ValidationError
from .learners import (FittedModel, LearnerSpec, TrainFingerprint, fit_learner,
                       load_model, predict, save_model)
from .parallel import pmap
from .seeding import derive_seed


class TrainingScope(Enum):
    FULL_TASK = "full_task"
    TRAIN_SPLIT_ONLY = "train_split_only"


@dataclass(frozen=True)
class ModelBank:
    """One frozen stage-1 model per task, in collection order."""

    models: dict[str, FittedModel]
    learner_spec: LearnerSpec
    collection_id: str
    training_scope: TrainingScope

    def __post_init__(self) -> None:
        for task_id, model in self.models.items():
            if model.spec.key() != self.learner_spec.key():
                raise ValidationError(
                    f"model for task {task_id!r} does not match the bank's learner spec"
                )

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(self.models.keys())

    def model(self, task_id: str) -> FittedModel:
        if task_id not in self.models:
            raise ValidationError(f"bank has no model for task {task_id!r}")
        return self.models[task_id]


@dataclass(frozen=True)
class ExtrinsicMatrix:
    """Cross-task predictions for one target task's examples."""

    values: np.ndarray
    source_model_ids: tuple[str, ...]
    target_task_id: str
    order: int = 1

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValidationError("extrinsic values must be a 2-d matrix")
        if self.target_task_id in self.source_model_ids:
            raise ValidationError(
                f"leave-own-task-out violated: {self.target_task_id!r} among source models"
            )
        if vals.shape[1] != len(self.source_model_ids):
            raise ValidationError(
                f"{vals.shape[1]} columns for {len(self.source_model_ids)} source models"
            )
        if vals.size and not np.isfinite(vals).all():
            raise ValidationError(
                f"extrinsic matrix for {self.target_task_id!r} contains non-finite values"
            )
        if self.order not in (1, 2):
            raise ValidationError(f"transformation order must be 1 or 2, got {self.order}")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "source_model_ids", tuple(self.source_model_ids))

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]


def _training_rows(task: Task, scope: TrainingScope, plan: SplitPlan | None) -> np.ndarray:
    if scope is TrainingScope.FULL_TASK:
        return np.arange(task.n_examples)
    if plan is None:
        raise ValidationError(
            f"train-split-only scope requires a split plan for task {task.task_id!r}"
        )
    if plan.n != task.n_examples:
        raise ValidationError(
            f"split plan covers {plan.n} examples, task {task.task_id!r} has {task.n_examples}"
        )
    if plan.n_splits != 1:
        raise ValidationError(
            "train-split-only scope requires a holdout plan (k-fold would need one bank per fold)"
        )
    train, _ = plan.split(0)
    return train


def stage1_train(collection: TaskCollection, spec: LearnerSpec, scope: TrainingScope,
                 split_plans: dict[str, SplitPlan] | None = None,
                 workers: int = 1) -> ModelBank:
    """Fit one model per task on its intrinsic features.

    Under TRAIN_SPLIT_ONLY only the training side of each task's holdout
    plan is used; shared-example collections must then share one plan.
    """
    plans = split_plans or {}
    if scope is TrainingScope.TRAIN_SPLIT_ONLY:
        missing = [t.task_id for t in collection.tasks if t.task_id not in plans]
        if missing:
            raise ValidationError(f"no split plan for tasks: {', '.join(missing)}")
        if collection.mode is CollectionMode.SHARED_EXAMPLES:
            digests = {plans[t.task_id].digest for t in collection.tasks}
            if len(digests) != 1:
                raise ValidationError(
                    "shared-examples collections must use one split plan for all tasks"
                )

    def fit_one(task: Task) -> tuple[str, FittedModel]:
        rows = _training_rows(task, scope, plans.get(task.task_id))
        fp = TrainFingerprint(task_id=task.task_id,
                              row_ids=tuple(task.example_ids[i] for i in rows))
        seed = derive_seed(spec.seed, "stage1", task.task_id)
        try:
            model = fit_learner(spec, task.features[rows], task.targets[rows],
                                fingerprint=fp, seed=seed)
        except FitError as exc:
            err = FitError(f"stage-1 fit failed for task {task.task_id!r}: {exc}")
            err.task_id = task.task_id
            raise err from exc
        return task.task_id, model

    fitted = pmap(fit_one, collection.tasks, workers=workers)
    return ModelBank(models=dict(fitted), learner_spec=spec,
                     collection_id=collection.feature_space_id, training_scope=scope)


def build_extrinsic(target_task_id: str, bank: ModelBank, X: np.ndarray,
                    workers: int = 1) -> ExtrinsicMatrix:
    """Predict X with every bank model except the target task's own."""
    if target_task_id not in bank.models:
        raise ValidationError(f"unknown task id {target_task_id!r}")
    X = np.asarray(X, dtype=np.float64)
    source_ids = tuple(t for t in bank.task_ids if t != target_task_id)

    def one_column(src: str) -> np.ndarray:
        try:
            return predict(bank.models[src], X)
        except Exception as exc:
            raise FitError(f"prediction failed for source model {src!r}: {exc}") from exc

    columns = pmap(one_column, source_ids, workers=workers)
    values = np.column_stack(columns) if columns else np.empty((X.shape[0], 0))
    return ExtrinsicMatrix(values=values, source_model_ids=source_ids,
                           target_task_id=target_task_id, order=1)


def select_descriptors(matrix: ExtrinsicMatrix, cap: int, seed: int) -> ExtrinsicMatrix:
    """Keep a seeded uniform sample of ``cap`` columns, preserving order.

    A cap at or above the column count returns the matrix unchanged.
    """
    if cap < 1:
        raise ValidationError(f"descriptor cap must be at least 1, got {cap}")
    if cap >= matrix.n_columns:
        return matrix
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(matrix.n_columns, size=cap, replace=False))
    return ExtrinsicMatrix(values=matrix.values[:, keep],
                           source_model_ids=tuple(matrix.source_model_ids[i] for i in keep),
                           target_task_id=matrix.target_task_id, order=matrix.order)


def stage2_train(extrinsic: ExtrinsicMatrix, y: np.ndarray, spec: LearnerSpec,
                 fingerprint: TrainFingerprint | None = None,
                 seed: int | None = None, workers: int = 1) -> FittedModel:
    """Fit the final learner on the extrinsic representation."""
    y = np.asarray(y, dtype=np.float64)
    if extrinsic.values.shape[0] != len(y):
        raise FitError(
            f"extrinsic matrix has {extrinsic.values.shape[0]} rows, targets have {len(y)}"
        )
    fp = fingerprint if fingerprint is not None else TrainFingerprint(
        task_id=extrinsic.target_task_id, row_ids=())
    return fit_learner(spec, extrinsic.values, y, fingerprint=fp, seed=seed, workers=workers)


def second_order_extrinsic(target_task_id: str, bank: ModelBank,
                           stage2_models: dict[str, FittedModel],
                           stage2_sources: dict[str, tuple[str, ...]],
                           X: np.ndarray, workers: int = 1,
                           source_ids: tuple[str, ...] | None = None) -> ExtrinsicMatrix:
    """Order-2 representation: other tasks' stage-2 models applied to X.

    Column j is produced by rebuilding task j's own extrinsic view of X
    (its stage-1 sources, post-capping) and predicting with task j's
    stage-2 model. ``source_ids`` restricts the stage-2 column set; the
    default is every bank task except the target.
    """
    if target_task_id not in bank.models:
        raise ValidationError(f"unknown task id {target_task_id!r}")
    X = np.asarray(X, dtype=np.float64)
    if source_ids is None:
        source_ids = bank.task_ids
    other_ids = tuple(t for t in source_ids if t != target_task_id)
    missing = [t for t in other_ids if t not in stage2_models]
    if missing:
        raise ValidationError(f"missing stage-2 models for tasks: {', '.join(missing)}")

    # Stage-1 predictions are shared across the views; compute each once.
    needed = sorted({src for j in other_ids for src in stage2_sources[j]})
    stage1_cols = dict(zip(needed, pmap(lambda s: predict(bank.models[s], X),
                                        needed, workers=workers)))

    def one_column(j: str) -> np.ndarray:
        view = np.column_stack([stage1_cols[src] for src in stage2_sources[j]])
        try:
            return predict(stage2_models[j], view)
        except Exception as exc:
            raise FitError(f"stage-2 prediction failed for model {j!r}: {exc}") from exc

    columns = pmap(one_column, other_ids, workers=workers)
    values = np.column_stack(columns) if columns else np.empty((X.shape[0], 0))
    return ExtrinsicMatrix(values=values, source_model_ids=other_ids,
                           target_task_id=target_task_id, order=2)


def audit_no_leakage(bank: ModelBank, heldout_ids) -> list[str]:
    """Fingerprint audit: models must be disjoint from held-out rows.

    Returns human-readable violations; empty means the audit passed.
    """
    heldout = set(heldout_ids)
    violations = []
    for task_id, model in bank.models.items():
        overlap = set(model.train_fingerprint.row_ids) & heldout
        if overlap:
            sample = ", ".join(sorted(overlap)[:3])
            violations.append(
                f"model {task_id!r} trained on {len(overlap)} held-out rows (e.g. {sample})"
            )
    return violations


BANK_INDEX_NAME = "bank_index.json"


def save_bank(bank: ModelBank, out_dir: str | Path) -> Path:
    """One archive per model plus an index manifest; returns the index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for task_id, model in bank.models.items():
        fname = f"{task_id}.model.json"
        save_model(model, out_dir / fname)
        files[task_id] = fname
    index = {
        "collection_id": bank.collection_id,
        "learner_spec": bank.learner_spec.to_dict(),
        "training_scope": bank.training_scope.value,
        "task_order": list(bank.task_ids),
        "models": files,
    }
    index_path = out_dir / BANK_INDEX_NAME
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    return index_path


def load_bank(bank_dir: str | Path) -> ModelBank:
    bank_dir = Path(bank_dir)
    index_path = bank_dir / BANK_INDEX_NAME
    if not index_path.is_file():
        raise IngestionError(f"bank index not found: {index_path}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    order = index.get("task_order", list(index["models"].keys()))
    models = {task_id: load_model(bank_dir / index["models"][task_id])
              for task_id in order}
    return ModelBank(models=models,
                     learner_spec=LearnerSpec.from_dict(index["learner_spec"]),
                     collection_id=index["collection_id"],
                     training_scope=TrainingScope(index["training_scope"]))
