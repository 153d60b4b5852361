import json

import numpy as np
import pytest

from crossrep.data import (CollectionMode, SplitKind, Task, assemble_collection)
from crossrep.engine import TrainingScope
from crossrep.errors import ConfigError, FitError
from crossrep.learners import LearnerSpec
from crossrep.pipeline import (PipelineConfig, SplitProtocol, run_pipeline,
                               scores_tsv, write_result)
from crossrep.synth import Nonlinearity, SynthSpec, generate_collection

FOREST = LearnerSpec.forest(n_trees=8, seed=1)
FINAL = LearnerSpec.forest(n_trees=8, seed=2)
RIDGE = LearnerSpec.ridge(5.0)


def toy_collection(n_tasks=4, n=30, p=10, seed=1, mode=CollectionMode.INDEPENDENT_EXAMPLES):
    return generate_collection(SynthSpec(
        n_tasks=n_tasks, n_examples_per_task=n, n_features=p, relatedness=0.8,
        nonlinearity=Nonlinearity.NONLINEAR, noise_sd=0.1, seed=seed, mode=mode))


def config(collection, **overrides):
    base = dict(collection=collection, transformer_spec=FOREST, final_spec=FINAL,
                split=SplitProtocol(SplitKind.KFOLD, k=3), seed=11)
    base.update(overrides)
    return PipelineConfig(**base)


class TestRunPipeline:
    def test_cardinality(self):
        result = run_pipeline(config(toy_collection()))
        intrinsic = [r for r in result.results if r.representation.kind == "original"]
        transformed = [r for r in result.results if r.representation.kind == "transformed"]
        assert len(intrinsic) == 4
        assert len(transformed) == 4

    def test_determinism_across_runs_and_workers(self, tmp_path):
        col = toy_collection()
        a = run_pipeline(config(col, workers=1))
        b = run_pipeline(config(col, workers=3))
        assert scores_tsv(a) == scores_tsv(b)
        write_result(a, tmp_path / "a")
        write_result(b, tmp_path / "b")
        assert ((tmp_path / "a" / "scores.tsv").read_bytes()
                == (tmp_path / "b" / "scores.tsv").read_bytes())
        assert ((tmp_path / "a" / "comparison.tsv").read_bytes()
                == (tmp_path / "b" / "comparison.tsv").read_bytes())

    def test_shared_plans_between_representations(self):
        result = run_pipeline(config(toy_collection()))
        by_task = {}
        for r in result.results:
            by_task.setdefault(r.task_id, set()).add(r.plan_digest)
        for task_id, digests in by_task.items():
            assert len(digests) == 1

    def test_strict_mode_aborts_on_constant_task(self):
        tasks = list(toy_collection().tasks)
        bad = Task("broken", tasks[0].features, np.full(30, np.e),
                   tasks[0].feature_names, tasks[0].example_ids)
        col = assemble_collection([*tasks, bad], CollectionMode.INDEPENDENT_EXAMPLES)
        cfg = config(col, transformer_spec=LearnerSpec.svr(c=-1.0), strict=True)
        with pytest.raises(FitError):
            run_pipeline(cfg)

    def test_nonstrict_mode_records_failure_and_continues(self):
        tasks = list(toy_collection().tasks)
        rng = np.random.default_rng(0)
        tiny = Task("tiny", tasks[0].features[:8], rng.normal(size=8),
                    tasks[0].feature_names, tuple(f"w{i}" for i in range(8)))
        col = assemble_collection([*tasks, tiny], CollectionMode.INDEPENDENT_EXAMPLES)
        # internal 10-fold CV cannot run on the 8-row task; others are fine
        cfg = config(col, transformer_spec=LearnerSpec.ridge_cv((1.0, 10.0), k=10),
                     final_spec=RIDGE, strict=False)
        result = run_pipeline(cfg)
        assert [f.task_id for f in result.failures] == ["tiny"]
        assert result.failures[0].stage == "stage1"
        scored = {r.task_id for r in result.results}
        assert scored == {t.task_id for t in tasks}

    def test_descriptor_cap_respected(self):
        col = toy_collection(n_tasks=5)
        result = run_pipeline(config(col, transformer_spec=RIDGE, descriptor_cap=2))
        assert result.config_echo["descriptor_cap"] == 2

    def test_cap_above_sources_rejected_before_training(self):
        col = toy_collection(n_tasks=4)
        with pytest.raises(ConfigError, match="descriptor_cap"):
            config(col, descriptor_cap=4)

    def test_order2_results_present(self):
        col = toy_collection(n_tasks=3)
        result = run_pipeline(config(col, transformer_spec=RIDGE,
                                     final_spec=RIDGE, order=2))
        orders = {r.representation.order for r in result.results
                  if r.representation.kind == "transformed"}
        assert orders == {1, 2}

    def test_normalize_targets_flag(self):
        col = toy_collection()
        result = run_pipeline(config(col, transformer_spec=RIDGE, final_spec=RIDGE,
                                     normalize=True))
        assert set(result.normalization) == set(col.task_ids)

    def test_augment_flag_smoke(self):
        col = toy_collection(n_tasks=3)
        result = run_pipeline(config(col, transformer_spec=RIDGE, final_spec=RIDGE,
                                     augment=True))
        assert result.config_echo["augment"] is True


class TestSharedExamplesProtocol:
    def test_holdout_no_leakage(self, shared_collection):
        cfg = PipelineConfig(collection=shared_collection, transformer_spec=RIDGE,
                             final_spec=RIDGE,
                             split=SplitProtocol(SplitKind.HOLDOUT, test_fraction=0.3),
                             seed=5)
        assert cfg.resolved_scope is TrainingScope.TRAIN_SPLIT_ONLY
        result = run_pipeline(cfg)
        assert result.audit_violations == ()
        assert len([r for r in result.results
                    if r.representation.kind == "original"]) == 4

    def test_kfold_with_split_scope_rejected(self, shared_collection):
        with pytest.raises(ConfigError, match="holdout"):
            PipelineConfig(collection=shared_collection, transformer_spec=RIDGE,
                           final_spec=RIDGE,
                           split=SplitProtocol(SplitKind.KFOLD, k=3), seed=5)

    def test_kfold_allowed_with_full_task_scope(self, shared_collection):
        cfg = PipelineConfig(collection=shared_collection, transformer_spec=RIDGE,
                             final_spec=RIDGE,
                             split=SplitProtocol(SplitKind.KFOLD, k=4), seed=5,
                             stage1_scope=TrainingScope.FULL_TASK)
        result = run_pipeline(cfg)
        assert len(result.results) == 8


class TestResultFiles:
    def test_written_files_and_manifest_echo(self, tmp_path):
        result = run_pipeline(config(toy_collection(), transformer_spec=RIDGE,
                                     final_spec=RIDGE))
        out = write_result(result, tmp_path / "run")
        for name in ("scores.tsv", "comparison.tsv", "result.txt", "run_manifest.json"):
            assert (out / name).is_file()
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["config"]["seed"] == 11
        report = (out / "result.txt").read_text()
        assert "Original rep." in report
        assert "fingerprints" in report

    def test_scores_sorted_and_parseable(self, tmp_path):
        result = run_pipeline(config(toy_collection(), transformer_spec=RIDGE,
                                     final_spec=RIDGE))
        lines = scores_tsv(result).splitlines()
        header = lines[0].split("\t")
        assert header[0] == "task_id"
        body = [ln.split("\t") for ln in lines[1:]]
        assert body == sorted(body, key=lambda r: (r[0], r[1], int(r[3]), r[2]))
        for row in body:
            float(row[5])  # mean rmse parses
