"""End-to-end experiment pipeline.

For every task the harness scores the final learner on the intrinsic
representation and on the transformed representation under one shared
split plan per task, then aggregates the comparison. All randomness flows
from the config seed; two runs of the same config write byte-identical
score tables.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .data import (CollectionMode, NormalizationParams, SplitKind, SplitPlan, Task,
                   TaskCollection, assemble_collection, make_fold_plan,
                   make_holdout_plan, normalize_targets)
from .engine import (ExtrinsicMatrix, ModelBank, TrainingScope, audit_no_leakage,
                     build_extrinsic, select_descriptors, stage1_train, stage2_train)
from .errors import ConfigError, CrossrepError, FitError, ValidationError
from .evaluation import (ComparisonTable, CvResult, Representation,
                         compare_representations, comparison_tsv, cross_validate,
                         render_comparison)
from .learners import LearnerSpec, TrainFingerprint
from .seeding import derive_seed


@dataclass(frozen=True)
class SplitProtocol:
    """K-fold or holdout, applied identically to every representation."""

    kind: SplitKind
    k: int = 0
    test_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.kind is SplitKind.KFOLD and self.k < 2:
            raise ConfigError(f"k-fold protocol needs k >= 2, got {self.k}")
        if self.kind is SplitKind.HOLDOUT and not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(
                f"holdout protocol needs test_fraction in (0, 1), got {self.test_fraction}"
            )

    def make_plan(self, n: int, seed: int) -> SplitPlan:
        if self.kind is SplitKind.KFOLD:
            return make_fold_plan(n, self.k, seed)
        return make_holdout_plan(n, self.test_fraction, seed)

    def to_dict(self) -> dict:
        if self.kind is SplitKind.KFOLD:
            return {"kind": "kfold", "k": self.k}
        return {"kind": "holdout", "test_fraction": self.test_fraction}


@dataclass(frozen=True)
class PipelineConfig:
    collection: TaskCollection
    transformer_spec: LearnerSpec
    final_spec: LearnerSpec
    split: SplitProtocol
    seed: int
    descriptor_cap: int | None = None
    order: int = 1
    stage1_scope: TrainingScope | None = None
    strict: bool = False
    augment: bool = False
    normalize: bool = False
    workers: int = 1
    collection_ref: str = "<in-memory>"

    def __post_init__(self) -> None:
        if self.order not in (1, 2):
            raise ConfigError(f"transformation order must be 1 or 2, got {self.order}")
        n = self.collection.n_tasks
        if self.descriptor_cap is not None:
            if self.descriptor_cap < 1:
                raise ConfigError(f"descriptor_cap must be at least 1, got {self.descriptor_cap}")
            if self.descriptor_cap > n - 1:
                raise ConfigError(
                    f"descriptor_cap {self.descriptor_cap} exceeds the {n - 1} "
                    "available source models"
                )
        scope = self.resolved_scope
        if (scope is TrainingScope.TRAIN_SPLIT_ONLY
                and self.split.kind is not SplitKind.HOLDOUT):
            raise ConfigError(
                "train-split-only stage-1 scope requires a holdout split protocol"
            )
        for task in self.collection.tasks:
            if self.split.kind is SplitKind.KFOLD and self.split.k > task.n_examples:
                raise ConfigError(
                    f"task {task.task_id!r} has {task.n_examples} examples, "
                    f"fewer than k = {self.split.k}"
                )

    @property
    def resolved_scope(self) -> TrainingScope:
        if self.stage1_scope is not None:
            return self.stage1_scope
        if self.collection.mode is CollectionMode.SHARED_EXAMPLES:
            return TrainingScope.TRAIN_SPLIT_ONLY
        return TrainingScope.FULL_TASK

    def echo(self) -> dict:
        return {
            "collection": self.collection_ref,
            "collection_id": self.collection.feature_space_id,
            "mode": self.collection.mode.value,
            "transformer": self.transformer_spec.to_dict(),
            "final": self.final_spec.to_dict(),
            "split": self.split.to_dict(),
            "seed": self.seed,
            "descriptor_cap": self.descriptor_cap,
            "order": self.order,
            "stage1_scope": self.resolved_scope.value,
            "strict": self.strict,
            "augment": self.augment,
            "normalize_targets": self.normalize,
        }


@dataclass(frozen=True)
class TaskFailure:
    task_id: str
    stage: str
    message: str


@dataclass(frozen=True)
class ExperimentResult:
    collection_id: str
    config_echo: dict
    results: tuple[CvResult, ...]
    failures: tuple[TaskFailure, ...]
    bank_fingerprints: dict[str, str]
    audit_violations: tuple[str, ...]
    normalization: dict[str, NormalizationParams]
    version: str = __version__

    @property
    def table(self) -> ComparisonTable:
        return compare_representations(list(self.results))


def _make_plans(collection: TaskCollection, split: SplitProtocol,
                seed: int) -> dict[str, SplitPlan]:
    if collection.mode is CollectionMode.SHARED_EXAMPLES:
        plan = split.make_plan(collection.tasks[0].n_examples, derive_seed(seed, "split"))
        return {t.task_id: plan for t in collection.tasks}
    return {t.task_id: split.make_plan(t.n_examples, derive_seed(seed, "split", t.task_id))
            for t in collection.tasks}


def _normalize_collection(collection: TaskCollection
                          ) -> tuple[TaskCollection, dict[str, NormalizationParams]]:
    tasks, params = [], {}
    for task in collection.tasks:
        normalized, p = normalize_targets(task)
        tasks.append(normalized)
        params[task.task_id] = p
    return assemble_collection(tasks, collection.mode,
                               collection.feature_space_id), params


def _train_bank_with_isolation(collection: TaskCollection, config: PipelineConfig,
                               plans: dict[str, SplitPlan]
                               ) -> tuple[ModelBank, TaskCollection, list[TaskFailure]]:
    """Fit the stage-1 bank; non-strict mode drops failing tasks and retries."""
    failures: list[TaskFailure] = []
    scope = config.resolved_scope
    current = collection
    while True:
        try:
            bank = stage1_train(current, config.transformer_spec, scope,
                                split_plans=plans, workers=config.workers)
            return bank, current, failures
        except FitError as exc:
            if config.strict:
                raise
            failed = _failed_task_id(exc, current)
            if failed is None:
                raise
            failures.append(TaskFailure(failed, "stage1", str(exc)))
            remaining = [t for t in current.tasks if t.task_id != failed]
            if len(remaining) < 2:
                raise FitError(
                    "fewer than 2 tasks survived stage-1 training; cannot continue"
                ) from exc
            current = assemble_collection(remaining, current.mode,
                                          current.feature_space_id)


def _failed_task_id(exc: FitError, collection: TaskCollection) -> str | None:
    tagged = getattr(exc, "task_id", None)
    if tagged is not None:
        return tagged
    for t in collection.tasks:
        if f"{t.task_id!r}" in str(exc):
            return t.task_id
    return None


def _evaluate_task(task: Task, plan: SplitPlan, feature_sets: list[tuple[Representation, np.ndarray]],
                   config: PipelineConfig) -> list[CvResult]:
    out = []
    for rep, feats in feature_sets:
        out.append(cross_validate(feats, task.targets, config.final_spec, plan,
                                  task_id=task.task_id, representation=rep,
                                  row_ids=task.example_ids, workers=config.workers))
    return out


def run_pipeline(config: PipelineConfig) -> ExperimentResult:
    """Run the full two-stage experiment described by ``config``."""
    collection = config.collection
    norm_params: dict[str, NormalizationParams] = {}
    if config.normalize:
        collection, norm_params = _normalize_collection(collection)

    plans = _make_plans(collection, config.split, config.seed)
    bank, collection, failures = _train_bank_with_isolation(collection, config, plans)

    audit_violations: tuple[str, ...] = ()
    if (collection.mode is CollectionMode.SHARED_EXAMPLES
            and config.resolved_scope is TrainingScope.TRAIN_SPLIT_ONLY):
        plan = plans[collection.tasks[0].task_id]
        _, test_idx = plan.split(0)
        heldout = [collection.tasks[0].example_ids[i] for i in test_idx]
        audit_violations = tuple(audit_no_leakage(bank, heldout))
        if audit_violations:
            raise ValidationError(
                "leakage audit failed: " + "; ".join(audit_violations)
            )

    extrinsics: dict[str, ExtrinsicMatrix] = {}
    results: list[CvResult] = []
    order2_inputs: dict[str, tuple[Task, SplitPlan]] = {}

    for task in collection.tasks:
        plan = plans[task.task_id]
        try:
            ext = build_extrinsic(task.task_id, bank, task.features, workers=config.workers)
            if config.descriptor_cap is not None:
                ext = select_descriptors(ext, config.descriptor_cap,
                                         derive_seed(config.seed, "cap", task.task_id))
            feats = ext.values
            if config.augment:
                feats = np.hstack([task.features, ext.values])
            feature_sets = [(Representation.original(), task.features),
                            (Representation.transformed(config.transformer_spec, 1), feats)]
            task_results = _evaluate_task(task, plan, feature_sets, config)
        except CrossrepError as exc:
            if config.strict:
                raise
            failures.append(TaskFailure(task.task_id, "evaluate", str(exc)))
            continue
        extrinsics[task.task_id] = ext
        results.extend(task_results)
        order2_inputs[task.task_id] = (task, plan)

    if config.order == 2:
        results.extend(_run_second_order(bank, collection, extrinsics, order2_inputs,
                                         failures, config))

    # Keep only tasks scored under every representation so the comparison
    # table always sees identical task sets; recorded failures explain gaps.
    groups: dict[tuple, set[str]] = {}
    for r in results:
        groups.setdefault((r.final_learner.key(), r.representation.key()),
                          set()).add(r.task_id)
    common = set.intersection(*groups.values()) if groups else set()
    results = [r for r in results if r.task_id in common]
    fingerprints = {tid: bank.models[tid].train_fingerprint.digest for tid in bank.task_ids}
    return ExperimentResult(
        collection_id=collection.feature_space_id,
        config_echo=config.echo(),
        results=tuple(results),
        failures=tuple(failures),
        bank_fingerprints=fingerprints,
        audit_violations=audit_violations,
        normalization=norm_params,
    )


def _run_second_order(bank: ModelBank, collection: TaskCollection,
                      extrinsics: dict[str, ExtrinsicMatrix],
                      order2_inputs: dict[str, tuple[Task, SplitPlan]],
                      failures: list[TaskFailure],
                      config: PipelineConfig) -> list[CvResult]:
    from .engine import second_order_extrinsic

    # Tasks that failed first-order evaluation drop out of the order-2
    # column set; their stage-1 models may still feed surviving views.
    surviving = tuple(t for t in bank.task_ids if t in extrinsics)

    shared_holdout = (config.resolved_scope is TrainingScope.TRAIN_SPLIT_ONLY)
    stage2_models = {}
    stage2_sources = {}
    for task_id, ext in extrinsics.items():
        task, plan = order2_inputs[task_id]
        rows = np.arange(task.n_examples)
        if shared_holdout:
            rows, _ = plan.split(0)
        fp = TrainFingerprint(task_id=task_id,
                              row_ids=tuple(task.example_ids[i] for i in rows))
        train_view = ExtrinsicMatrix(values=ext.values[rows],
                                     source_model_ids=ext.source_model_ids,
                                     target_task_id=task_id, order=ext.order)
        try:
            stage2_models[task_id] = stage2_train(
                train_view, task.targets[rows], config.final_spec, fingerprint=fp,
                seed=derive_seed(config.seed, "stage2", task_id), workers=config.workers)
        except CrossrepError as exc:
            if config.strict:
                raise
            failures.append(TaskFailure(task_id, "stage2", str(exc)))
            continue
        stage2_sources[task_id] = ext.source_model_ids
    surviving = tuple(t for t in surviving if t in stage2_models)

    out: list[CvResult] = []
    rep = Representation.transformed(config.transformer_spec, 2)
    for task_id, (task, plan) in order2_inputs.items():
        try:
            ext2 = second_order_extrinsic(task_id, bank, stage2_models, stage2_sources,
                                          task.features, workers=config.workers,
                                          source_ids=surviving)
            if config.descriptor_cap is not None:
                ext2 = select_descriptors(ext2, config.descriptor_cap,
                                          derive_seed(config.seed, "cap2", task_id))
            out.append(cross_validate(ext2.values, task.targets, config.final_spec, plan,
                                      task_id=task_id, representation=rep,
                                      row_ids=task.example_ids, workers=config.workers))
        except CrossrepError as exc:
            if config.strict:
                raise
            failures.append(TaskFailure(task_id, "order2", str(exc)))
    return out


SCORES_NAME = "scores.tsv"
COMPARISON_NAME = "comparison.tsv"
REPORT_NAME = "result.txt"
MANIFEST_NAME = "run_manifest.json"


def scores_tsv(result: ExperimentResult) -> str:
    lines = ["task_id\tfinal\trepresentation\torder\tn_folds\tmean_rmse"
             "\tper_fold_rmse\tplan_digest"]
    rep_order = {r.representation.key(): (0 if r.representation.kind == "original" else
                                          r.representation.order)
                 for r in result.results}
    def sort_key(r: CvResult):
        return (r.task_id, r.final_learner.label, rep_order[r.representation.key()],
                r.representation.label)
    for r in sorted(result.results, key=sort_key):
        lines.append("\t".join([
            r.task_id,
            r.final_learner.label,
            r.representation.label,
            str(rep_order[r.representation.key()]),
            str(len(r.per_fold_rmse)),
            repr(r.mean_rmse),
            ";".join(repr(v) for v in r.per_fold_rmse),
            r.plan_digest,
        ]))
    return "\n".join(lines) + "\n"


def render_report(result: ExperimentResult) -> str:
    parts = [
        f"crossrep experiment report (version {result.version})",
        f"collection: {result.collection_id}",
        "",
        "config:",
        json.dumps(result.config_echo, indent=2, sort_keys=True),
        "",
        "comparison:",
        render_comparison(result.table).rstrip("\n"),
        "",
        f"tasks scored: {len({r.task_id for r in result.results})}",
        f"failures: {len(result.failures)}",
    ]
    for f in result.failures:
        parts.append(f"  {f.task_id} [{f.stage}]: {f.message}")
    if result.audit_violations:
        parts.append("leakage audit violations:")
        parts.extend(f"  {v}" for v in result.audit_violations)
    elif result.config_echo.get("stage1_scope") == TrainingScope.TRAIN_SPLIT_ONLY.value:
        parts.append("leakage audit: clean")
    else:
        parts.append("leakage audit: not applicable (full-task stage-1 scope)")
    parts.append("")
    parts.append("stage-1 train fingerprints:")
    for task_id in sorted(result.bank_fingerprints):
        parts.append(f"  {task_id}: {result.bank_fingerprints[task_id]}")
    return "\n".join(parts) + "\n"


def write_result(result: ExperimentResult, out_dir: str | Path) -> Path:
    """Persist score tables, the comparison, the report, and a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / SCORES_NAME).write_text(scores_tsv(result), encoding="utf-8")
    (out_dir / COMPARISON_NAME).write_text(comparison_tsv(result.table), encoding="utf-8")
    (out_dir / REPORT_NAME).write_text(render_report(result), encoding="utf-8")
    manifest = {
        "config": result.config_echo,
        "version": result.version,
        "completed_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": [SCORES_NAME, COMPARISON_NAME, REPORT_NAME],
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    return out_dir
