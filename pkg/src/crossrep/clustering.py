"""Prediction-space analysis: cross-prediction matrices and k-means.

Applying every bank model to a pooled example set gives a full matrix of
predictions (no leave-own-task-out here; this is analysis, not training
input). Clustering its columns groups tasks by how they predict;
clustering its rows groups examples by how they are predicted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CollectionMode, TaskCollection
from .engine import ModelBank
from .errors import ValidationError
from .learners import predict
from .parallel import pmap

KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-6


def build_pool(collection: TaskCollection, cap: int | None = None,
               seed: int = 0) -> tuple[np.ndarray, tuple[str, ...]]:
    """Pooled example set for cross-prediction analysis.

    Shared-example collections contribute their common rows once;
    otherwise all tasks' rows are concatenated (ids prefixed with the
    task id). ``cap`` takes a seeded uniform subsample, preserving order.
    """
    if collection.mode is CollectionMode.SHARED_EXAMPLES:
        X = np.asarray(collection.tasks[0].features)
        ids = collection.tasks[0].example_ids
    else:
        X = np.vstack([t.features for t in collection.tasks])
        ids = tuple(f"{t.task_id}:{ex}" for t in collection.tasks
                    for ex in t.example_ids)
    if cap is not None:
        if cap < 1:
            raise ValidationError(f"pool cap must be at least 1, got {cap}")
        if cap < len(ids):
            rng = np.random.default_rng(seed)
            keep = np.sort(rng.choice(len(ids), size=cap, replace=False))
            X = X[keep]
            ids = tuple(ids[i] for i in keep)
    return np.ascontiguousarray(X), ids


@dataclass(frozen=True)
class CrossPredictionMatrix:
    """Predictions of every task model on a pooled example set."""

    values: np.ndarray
    example_ids: tuple[str, ...]
    task_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValidationError("cross-prediction values must be a 2-d matrix")
        if vals.shape != (len(self.example_ids), len(self.task_ids)):
            raise ValidationError(
                f"shape {vals.shape} does not match {len(self.example_ids)} examples "
                f"x {len(self.task_ids)} tasks"
            )
        if vals.size and not np.isfinite(vals).all():
            raise ValidationError("cross-prediction matrix contains non-finite values")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    k: int
    seed: int
    converged: bool
    n_iter: int
    inertia_history: tuple[float, ...]
    item_ids: tuple[str, ...] = ()


def cross_prediction_matrix(bank: ModelBank, pool: np.ndarray,
                            example_ids: tuple[str, ...] | None = None,
                            workers: int = 1) -> CrossPredictionMatrix:
    """Apply all n bank models to the pool; returns a |pool| x n matrix."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise ValidationError("pool must be a 2-d matrix")
    ids = example_ids if example_ids is not None else tuple(
        f"pool{i:05d}" for i in range(pool.shape[0]))
    columns = pmap(lambda tid: predict(bank.models[tid], pool), bank.task_ids,
                   workers=workers)
    return CrossPredictionMatrix(values=np.column_stack(columns), example_ids=ids,
                                 task_ids=bank.task_ids)


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    return (X - mean) / scale


def kmeans(X: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER,
           tol: float = KMEANS_TOL) -> ClusterResult:
    """Lloyd's algorithm with seeded distinct-item initialization.

    Iterates until assignments stop changing, the inertia improvement
    drops below ``tol``, or the iteration cap is reached; a final centroid
    update keeps the mean-consistency invariant exact at termination.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    if n == 0:
        raise ValidationError("cannot cluster an empty matrix")

    rng = np.random.default_rng(seed)
    # Prefer geometrically distinct rows as initial centroids so duplicate
    # items cannot produce empty clusters at the first assignment.
    order = rng.permutation(n)
    chosen: list[int] = []
    seen_rows: set[bytes] = set()
    for i in order:
        key = X[i].tobytes()
        if key not in seen_rows:
            seen_rows.add(key)
            chosen.append(int(i))
        if len(chosen) == k:
            break
    pos = 0
    while len(chosen) < k:  # fewer distinct rows than k: reuse rows
        chosen.append(int(order[pos % n]))
        pos += 1
    centroids = X[np.asarray(chosen)].copy()

    def costs(cents: np.ndarray) -> np.ndarray:
        return ((X[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)

    def refresh(asg: np.ndarray) -> None:
        for c in range(k):
            members = asg == c
            if members.any():
                centroids[c] = X[members].mean(axis=0)
            # an empty cluster keeps its previous centroid

    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = costs(centroids)
        new_assignments = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new_assignments].sum()))
        if np.array_equal(new_assignments, assignments):
            # Exact fixed point: centroids are already the member means and
            # every item sits with its nearest centroid.
            converged = True
            break
        assignments = new_assignments
        refresh(assignments)
        if len(history) >= 2 and history[-2] - history[-1] < tol:
            # Stalled; one confirmation pass decides convergence.
            d2 = costs(centroids)
            confirm = np.argmin(d2, axis=1)
            history.append(float(d2[np.arange(n), confirm].sum()))
            converged = bool(np.array_equal(confirm, assignments))
            assignments = confirm
            break

    d2 = costs(centroids)
    inertia = float(d2[np.arange(n), assignments].sum())
    return ClusterResult(assignments=assignments, centroids=centroids, inertia=inertia,
                         k=k, seed=seed, converged=converged, n_iter=it,
                         inertia_history=tuple(history))


def cluster_tasks(matrix: CrossPredictionMatrix, k: int, seed: int,
                  standardize: bool = False) -> ClusterResult:
    """K-means over task columns (each task = its prediction vector)."""
    if not 1 <= k <= len(matrix.task_ids):
        raise ValidationError(f"k must be in [1, {len(matrix.task_ids)}], got {k}")
    if matrix.values.shape[0] == 0:
        raise ValidationError("cannot cluster tasks of an empty pool")
    items = matrix.values.T
    if standardize:
        # A task item's features are the pool rows: standardize those.
        items = _standardize_columns(items)
    result = kmeans(np.ascontiguousarray(items), k, seed)
    return ClusterResult(assignments=result.assignments, centroids=result.centroids,
                         inertia=result.inertia, k=k, seed=seed,
                         converged=result.converged, n_iter=result.n_iter,
                         inertia_history=result.inertia_history,
                         item_ids=matrix.task_ids)


def cluster_examples(matrix: CrossPredictionMatrix, k: int, seed: int,
                     standardize: bool = False) -> ClusterResult:
    """K-means over example rows (each example = its prediction tuple)."""
    if not 1 <= k <= len(matrix.example_ids):
        raise ValidationError(f"k must be in [1, {len(matrix.example_ids)}], got {k}")
    items = matrix.values
    if standardize:
        items = _standardize_columns(items)
    result = kmeans(np.ascontiguousarray(items), k, seed)
    return ClusterResult(assignments=result.assignments, centroids=result.centroids,
                         inertia=result.inertia, k=k, seed=seed,
                         converged=result.converged, n_iter=result.n_iter,
                         inertia_history=result.inertia_history,
                         item_ids=matrix.example_ids)


def assignments_tsv(result: ClusterResult) -> str:
    """Delimited assignment table."""
    lines = ["item_id\tcluster"]
    ids = result.item_ids or tuple(str(i) for i in range(len(result.assignments)))
    for item_id, c in zip(ids, result.assignments):
        lines.append(f"{item_id}\t{int(c)}")
    return "\n".join(lines) + "\n"


def pairwise_distances_tsv(X: np.ndarray, ids: tuple[str, ...]) -> str:
    """Euclidean distance matrix dump for external visualization."""
    X = np.asarray(X, dtype=np.float64)
    lines = ["\t".join(["item_id", *ids])]
    for i, item_id in enumerate(ids):
        d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
        lines.append("\t".join([item_id, *(repr(float(v)) for v in d)]))
    return "\n".join(lines) + "\n"
