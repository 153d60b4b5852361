"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 validation/config error,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import (assignments_tsv, build_pool, cluster_examples,
                         cluster_tasks, cross_prediction_matrix,
                         pairwise_distances_tsv)
from .data import CollectionMode, SplitKind, load_collection, load_task, write_collection
from .engine import TrainingScope, load_bank, save_bank, stage1_train
from .errors import (ConfigError, ConvergenceError, CrossrepError, FitError,
                     IngestionError, ValidationError)
from .evaluation import (ComparisonTable, ComparisonRow, render_comparison)
from .learners import LearnerKind, LearnerSpec
from .parallel import resolve_workers
from .pipeline import (PipelineConfig, SCORES_NAME, SplitProtocol, run_pipeline,
                       write_result)
from .synth import Nonlinearity, SynthSpec, generate_collection

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def parse_learner_spec(doc: dict) -> LearnerSpec:
    """Flat config form: {"kind": ..., "seed": ..., <hyperparams>}."""
    if "kind" not in doc:
        raise ConfigError("learner spec needs a 'kind' field")
    try:
        kind = LearnerKind(doc["kind"])
    except ValueError:
        valid = ", ".join(k.value for k in LearnerKind)
        raise ConfigError(f"unknown learner kind {doc['kind']!r} (valid: {valid})") from None
    kwargs = {k: v for k, v in doc.items() if k != "kind"}
    if "lambda_grid" in kwargs:
        kwargs["lambda_grid"] = tuple(kwargs["lambda_grid"])
    ctor = {LearnerKind.RIDGE: LearnerSpec.ridge,
            LearnerKind.RIDGE_CV: LearnerSpec.ridge_cv,
            LearnerKind.FOREST: LearnerSpec.forest,
            LearnerKind.SVR: LearnerSpec.svr}[kind]
    try:
        return ctor(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad hyperparams for {kind.value}: {exc}") from None


def load_config(path: Path, seed_override: int | None, workers: int,
                strict_flag: bool) -> PipelineConfig:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    for field in ("collection", "transformer", "final", "split", "seed"):
        if field not in doc:
            raise ConfigError(f"{path}: config missing field {field!r}")
    collection_ref = str(doc["collection"])
    collection = load_collection(path.parent / collection_ref)
    split_doc = doc["split"]
    if split_doc.get("kind") == "kfold":
        split = SplitProtocol(SplitKind.KFOLD, k=int(split_doc.get("k", 0)))
    elif split_doc.get("kind") == "holdout":
        split = SplitProtocol(SplitKind.HOLDOUT,
                              test_fraction=float(split_doc.get("test_fraction", 0.0)))
    else:
        raise ConfigError(f"{path}: split.kind must be 'kfold' or 'holdout'")
    scope_doc = doc.get("stage1_scope")
    try:
        scope = TrainingScope(scope_doc) if scope_doc else None
    except ValueError:
        raise ConfigError(
            f"{path}: stage1_scope must be 'full_task' or 'train_split_only', "
            f"got {scope_doc!r}") from None
    cap = doc.get("descriptor_cap")
    return PipelineConfig(
        collection=collection,
        transformer_spec=parse_learner_spec(doc["transformer"]),
        final_spec=parse_learner_spec(doc["final"]),
        split=split,
        seed=int(doc["seed"] if seed_override is None else seed_override),
        descriptor_cap=None if cap is None else int(cap),
        order=int(doc.get("order", 1)),
        stage1_scope=scope,
        strict=bool(doc.get("strict", False)) or strict_flag,
        augment=bool(doc.get("augment", False)),
        normalize=bool(doc.get("normalize_targets", False)),
        workers=workers,
        collection_ref=collection_ref,
    )


def cmd_run(args: argparse.Namespace) -> int:
    workers = resolve_workers(args.workers)
    config = load_config(Path(args.config), args.seed, workers, args.strict)
    result = run_pipeline(config)
    out_dir = write_result(result, Path(args.out))
    print(f"wrote {out_dir / SCORES_NAME}")
    print(render_comparison(result.table), end="")
    if result.failures:
        print(f"{len(result.failures)} task(s) failed; see the report for details")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        n_tasks=args.tasks,
        n_examples_per_task=args.examples,
        n_features=args.features,
        relatedness=args.relatedness,
        nonlinearity=Nonlinearity(args.nonlinearity),
        noise_sd=args.noise_sd,
        seed=args.seed,
        mode=CollectionMode(args.mode),
    )
    collection = generate_collection(spec)
    manifest = write_collection(collection, Path(args.out))
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train_bank(args: argparse.Namespace) -> int:
    collection = load_collection(Path(args.collection))
    spec = parse_learner_spec(json.loads(args.learner))
    bank = stage1_train(collection, spec, TrainingScope.FULL_TASK,
                        workers=resolve_workers(args.workers))
    index = save_bank(bank, Path(args.out))
    print(f"wrote {index}")
    return EXIT_OK


def cmd_cluster(args: argparse.Namespace) -> int:
    bank = load_bank(Path(args.bank))
    pool_path = Path(args.pool)
    if pool_path.suffix == ".json":
        # a collection manifest: pool the collection's own example rows
        collection = load_collection(pool_path)
        pool, ids = build_pool(collection, cap=args.pool_cap, seed=args.seed)
    elif args.target:
        pool_task = load_task(pool_path, target=args.target)
        pool = pool_task.features
        ids = pool_task.example_ids
    else:
        pool, ids = _load_pool_matrix(pool_path)
    matrix = cross_prediction_matrix(bank, pool, example_ids=ids,
                                     workers=resolve_workers(args.workers))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.items in ("tasks", "both"):
        res = cluster_tasks(matrix, args.k, args.seed, standardize=args.standardize)
        (out_dir / "task_clusters.tsv").write_text(assignments_tsv(res), encoding="utf-8")
        wrote.append("task_clusters.tsv")
        if args.distances:
            (out_dir / "task_distances.tsv").write_text(
                pairwise_distances_tsv(matrix.values.T, matrix.task_ids), encoding="utf-8")
            wrote.append("task_distances.tsv")
    if args.items in ("examples", "both"):
        res = cluster_examples(matrix, args.k, args.seed, standardize=args.standardize)
        (out_dir / "example_clusters.tsv").write_text(assignments_tsv(res), encoding="utf-8")
        wrote.append("example_clusters.tsv")
        if args.distances:
            (out_dir / "example_distances.tsv").write_text(
                pairwise_distances_tsv(matrix.values, matrix.example_ids), encoding="utf-8")
            wrote.append("example_distances.tsv")
    print(f"wrote {', '.join(wrote)} to {out_dir}")
    return EXIT_OK


def _load_pool_matrix(path: Path) -> tuple[np.ndarray, tuple[str, ...]]:
    """Pool file: id column plus numeric feature columns, no target."""
    if not path.is_file():
        raise IngestionError(f"pool file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise IngestionError(f"{path}: empty file")
    delim = "\t" if "\t" in lines[0] else ","
    header = lines[0].split(delim)
    rows = [ln.split(delim) for ln in lines[1:] if ln.strip()]
    ids = tuple(r[0] for r in rows)
    try:
        values = np.array([[float(c) for c in r[1:]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric pool value ({exc})") from None
    if values.size and not np.isfinite(values).all():
        raise IngestionError(f"{path}: pool contains non-finite values")
    if len(header) - 1 != (values.shape[1] if len(rows) else 0) and rows:
        raise IngestionError(f"{path}: ragged pool rows")
    return values, ids


def cmd_compare(args: argparse.Namespace) -> int:
    rows = []
    for path in args.scores:
        rows.extend(_read_scores(Path(path)))
    table = _table_from_scores(rows)
    text = render_comparison(table)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _read_scores(path: Path) -> list[dict]:
    if not path.is_file():
        raise IngestionError(f"score file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    out = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        cells = dict(zip(header, ln.split("\t")))
        out.append(cells)
    return out


def _table_from_scores(rows: list[dict]) -> ComparisonTable:
    """Rebuild the comparison table from persisted score rows."""
    from .evaluation import improvement_pct, win_count

    groups: dict[tuple[str, str], dict[str, float]] = {}
    for r in rows:
        key = (r["final"], r["representation"])
        groups.setdefault(key, {})[r["task_id"]] = float(r["mean_rmse"])
    out_rows = []
    for (final, rep), scores in sorted(groups.items()):
        mean = float(np.mean(sorted(scores.values())))
        if rep == "Original rep.":
            out_rows.append(ComparisonRow(final, rep, mean, None, 0, 0,
                                          len(scores), len(scores)))
            continue
        base = groups.get((final, "Original rep."))
        if base is None:
            raise ValidationError(f"no original-representation scores for {final!r}")
        wins, losses, ties = win_count(base, scores)
        base_mean = float(np.mean(sorted(base.values())))
        out_rows.append(ComparisonRow(final, rep, mean, improvement_pct(base_mean, mean),
                                      wins, losses, ties, len(scores)))
    return ComparisonTable(rows=tuple(out_rows))


def cmd_inspect_bank(args: argparse.Namespace) -> int:
    bank = load_bank(Path(args.bank))
    print(f"collection: {bank.collection_id}")
    print(f"learner: {bank.learner_spec.label} {json.dumps(bank.learner_spec.to_dict()['hyperparams'], sort_keys=True)}")
    print(f"scope: {bank.training_scope.value}")
    print(f"models: {len(bank.models)}")
    for task_id in bank.task_ids:
        model = bank.models[task_id]
        fp = model.train_fingerprint
        print(f"  {task_id}: features={model.feature_count} "
              f"rows={len(fp.row_ids)} fingerprint={fp.digest[:16]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossrep",
        description="Multi-task regression on cross-task prediction representations.")
    parser.add_argument("--version", action="version", version=f"crossrep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--strict", action="store_true")
    p_run.set_defaults(fn=cmd_run)

    p_synth = sub.add_parser("synth", help="generate a synthetic collection")
    p_synth.add_argument("--tasks", type=int, required=True)
    p_synth.add_argument("--examples", type=int, required=True)
    p_synth.add_argument("--features", type=int, required=True)
    p_synth.add_argument("--relatedness", type=float, default=0.8)
    p_synth.add_argument("--nonlinearity", choices=["linear", "nonlinear"],
                         default="nonlinear")
    p_synth.add_argument("--noise-sd", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--mode", choices=["independent", "shared"],
                         default="independent")
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(fn=cmd_synth)

    p_bank = sub.add_parser("train-bank", help="fit stage-1 models and save the bank")
    p_bank.add_argument("--collection", required=True, help="collection manifest path")
    p_bank.add_argument("--learner", required=True,
                        help='learner spec as JSON, e.g. \'{"kind": "ridge", "lam": 10}\'')
    p_bank.add_argument("--out", required=True)
    p_bank.add_argument("--workers", type=int, default=None)
    p_bank.set_defaults(fn=cmd_train_bank)

    p_cluster = sub.add_parser("cluster", help="cluster tasks/examples in prediction space")
    p_cluster.add_argument("--bank", required=True, help="bank directory")
    p_cluster.add_argument("--pool", required=True,
                           help="pooled example file, or a collection manifest "
                                "to pool the collection's own rows")
    p_cluster.add_argument("--target", default=None,
                           help="target column to drop if the pool is a task file")
    p_cluster.add_argument("--pool-cap", type=int, default=None,
                           help="seeded subsample size for manifest pools")
    p_cluster.add_argument("--k", type=int, required=True)
    p_cluster.add_argument("--seed", type=int, default=0)
    p_cluster.add_argument("--items", choices=["tasks", "examples", "both"],
                           default="both")
    p_cluster.add_argument("--standardize", action="store_true")
    p_cluster.add_argument("--distances", action="store_true",
                           help="also dump pairwise distance matrices")
    p_cluster.add_argument("--workers", type=int, default=None)
    p_cluster.add_argument("--out", required=True)
    p_cluster.set_defaults(fn=cmd_cluster)

    p_cmp = sub.add_parser("compare", help="merge score tables into one comparison")
    p_cmp.add_argument("scores", nargs="+", help="scores.tsv files")
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(fn=cmd_compare)

    p_inspect = sub.add_parser("inspect-bank", help="list bank models and fingerprints")
    p_inspect.add_argument("--bank", required=True)
    p_inspect.set_defaults(fn=cmd_inspect_bank)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValidationError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, ConvergenceError, CrossrepError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
