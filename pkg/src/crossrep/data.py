"""Task data model, file ingestion, split planning, and target normalization.

A task file is a UTF-8 delimited table (comma or tab, auto-detected from
the header line): first column holds example ids, one header-named column
holds the regression target, and every remaining column is a numeric
feature. A collection manifest is a JSON document listing task files, the
target column name, the collection mode, and a collection id.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import IngestionError, ValidationError
from .seeding import derive_seed


class CollectionMode(Enum):
    """How example rows relate across the tasks of a collection."""

    INDEPENDENT_EXAMPLES = "independent"
    SHARED_EXAMPLES = "shared"


class SplitKind(Enum):
    KFOLD = "kfold"
    HOLDOUT = "holdout"


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Task:
    """One regression problem: a feature matrix, a target vector, and ids.

    Immutable after construction; all invariants are checked up front so
    downstream code can rely on clean, finite, consistently shaped data.
    """

    task_id: str
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    example_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        targs = np.asarray(self.targets, dtype=np.float64)
        if feats.ndim != 2:
            raise ValidationError(f"task {self.task_id!r}: features must be a 2-d matrix")
        if targs.ndim != 1:
            raise ValidationError(f"task {self.task_id!r}: targets must be a 1-d vector")
        n = feats.shape[0]
        if n == 0:
            raise ValidationError(f"task {self.task_id!r} has zero examples")
        if len(targs) != n or len(self.example_ids) != n:
            raise ValidationError(
                f"task {self.task_id!r}: row count mismatch "
                f"(features {n}, targets {len(targs)}, ids {len(self.example_ids)})"
            )
        if len(self.feature_names) != feats.shape[1]:
            raise ValidationError(
                f"task {self.task_id!r}: {len(self.feature_names)} feature names "
                f"for {feats.shape[1]} columns"
            )
        seen: set[str] = set()
        for name in self.feature_names:
            if name in seen:
                raise ValidationError(f"task {self.task_id!r}: duplicate feature name {name!r}")
            seen.add(name)
        if not np.isfinite(feats).all():
            i, j = np.argwhere(~np.isfinite(feats))[0]
            raise ValidationError(
                f"task {self.task_id!r}: non-finite feature value at row "
                f"{self.example_ids[i]!r}, column {self.feature_names[j]!r}"
            )
        if not np.isfinite(targs).all():
            i = int(np.flatnonzero(~np.isfinite(targs))[0])
            raise ValidationError(
                f"task {self.task_id!r}: non-finite target at row {self.example_ids[i]!r}"
            )
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "targets", _readonly(targs))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "example_ids", tuple(str(e) for e in self.example_ids))

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def with_targets(self, targets: np.ndarray) -> "Task":
        return Task(self.task_id, self.features, targets, self.feature_names, self.example_ids)


@dataclass(frozen=True)
class TaskCollection:
    """An ordered set of tasks sharing one intrinsic feature space."""

    tasks: tuple[Task, ...]
    mode: CollectionMode
    feature_space_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if len(self.tasks) < 2:
            raise ValidationError("a collection needs at least 2 tasks")
        ref = self.tasks[0]
        ids = {t.task_id for t in self.tasks}
        if len(ids) != len(self.tasks):
            raise ValidationError("duplicate task ids in collection")
        for t in self.tasks[1:]:
            if t.feature_names != ref.feature_names:
                col = _first_name_mismatch(ref.feature_names, t.feature_names)
                raise ValidationError(
                    f"feature-space mismatch between tasks {ref.task_id!r} and "
                    f"{t.task_id!r}: first differing column {col!r}"
                )
        if self.mode is CollectionMode.SHARED_EXAMPLES:
            for t in self.tasks[1:]:
                if t.example_ids != ref.example_ids:
                    raise ValidationError(
                        f"shared-examples collection requires identical example ids in "
                        f"identical order; task {t.task_id!r} differs from {ref.task_id!r}"
                    )

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(t.task_id for t in self.tasks)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def task(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(f"unknown task id {task_id!r}")


def _first_name_mismatch(a: tuple[str, ...], b: tuple[str, ...]) -> str:
    for i in range(max(len(a), len(b))):
        ai = a[i] if i < len(a) else "<missing>"
        bi = b[i] if i < len(b) else "<missing>"
        if ai != bi:
            return bi if bi != "<missing>" else ai
    return "<none>"


@dataclass(frozen=True)
class NormalizationParams:
    """Min/max of the original target vector, kept for inversion."""

    min: float
    max: float

    def __post_init__(self) -> None:
        if not self.max > self.min:
            raise ValidationError("normalization requires max > min")


@dataclass(frozen=True)
class SplitPlan:
    """A deterministic partition of n examples into folds or a holdout.

    ``assignments`` holds one integer per example: the fold index for a
    k-fold plan, or 0 (train) / 1 (test) for a holdout plan.
    """

    kind: SplitKind
    assignments: np.ndarray
    seed: int
    k: int = 0
    test_fraction: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignments", _readonly(np.asarray(self.assignments, dtype=np.int64)))

    @property
    def n(self) -> int:
        return len(self.assignments)

    @property
    def n_splits(self) -> int:
        return self.k if self.kind is SplitKind.KFOLD else 1

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_indices, test_indices) for split number ``i``."""
        if not 0 <= i < self.n_splits:
            raise ValidationError(f"split index {i} out of range for {self.n_splits} splits")
        if self.kind is SplitKind.KFOLD:
            test = self.assignments == i
        else:
            test = self.assignments == 1
        idx = np.arange(self.n)
        return idx[~test], idx[test]

    @property
    def digest(self) -> str:
        """Stable content hash; equal plans hash equal on any platform."""
        h = hashlib.sha256()
        h.update(self.kind.value.encode())
        h.update(f":{self.seed}:{self.k}:{self.test_fraction!r}:".encode())
        h.update(self.assignments.tobytes())
        return h.hexdigest()


def make_fold_plan(n: int, k: int, seed: int) -> SplitPlan:
    """Shuffle n examples into k folds whose sizes differ by at most 1."""
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValidationError(f"k ({k}) exceeds the number of examples ({n})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    base, extra = divmod(n, k)
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        assignments[order[start : start + size]] = fold
        start += size
    return SplitPlan(SplitKind.KFOLD, assignments, seed=seed, k=k)


def make_holdout_plan(n: int, test_fraction: float, seed: int) -> SplitPlan:
    """Reserve round(n * test_fraction) examples as the test side."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise ValidationError(
            f"n={n} with test_fraction={test_fraction} leaves an empty train or test side"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = np.zeros(n, dtype=np.int64)
    assignments[order[:n_test]] = 1
    return SplitPlan(SplitKind.HOLDOUT, assignments, seed=seed, test_fraction=test_fraction)


def normalize_targets(task: Task) -> tuple[Task, NormalizationParams]:
    """Rescale targets to [0, 1] by their global min/max."""
    lo = float(task.targets.min())
    hi = float(task.targets.max())
    if hi == lo:
        raise ValidationError(f"task {task.task_id!r}: constant target vector cannot be normalized")
    params = NormalizationParams(min=lo, max=hi)
    return task.with_targets((task.targets - lo) / (hi - lo)), params


def denormalize_targets(values: np.ndarray, params: NormalizationParams) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * (params.max - params.min) + params.min


def _detect_delimiter(header_line: str) -> str:
    if "\t" in header_line:
        return "\t"
    return ","


def load_task(path: str | Path, target: str, *, task_id: str | None = None,
              delimiter: str | None = None) -> Task:
    """Load one task from a delimited text file.

    The first column is the example id, ``target`` names the target
    column, and every other column is parsed as a numeric feature.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"task file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise IngestionError(f"{path}: empty file")
    delim = delimiter or _detect_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    if len(header) < 3:
        raise IngestionError(f"{path}: need at least an id column, one feature, and a target")
    seen: set[str] = set()
    for name in header:
        if name in seen:
            raise IngestionError(f"{path}: duplicate header column {name!r}")
        seen.add(name)
    if target not in header[1:]:
        raise IngestionError(f"{path}: missing target column {target!r}")
    target_idx = header.index(target)
    feature_names = tuple(h for i, h in enumerate(header) if i != 0 and i != target_idx)

    data_rows = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not data_rows:
        raise IngestionError(f"{path}: task has zero examples")

    n = len(data_rows)
    features = np.empty((n, len(feature_names)), dtype=np.float64)
    targets = np.empty(n, dtype=np.float64)
    example_ids: list[str] = []
    for i, row in enumerate(data_rows):
        if len(row) != len(header):
            raise IngestionError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}"
            )
        example_ids.append(row[0].strip())
        col = 0
        for j, cell in enumerate(row):
            if j == 0:
                continue
            try:
                value = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric value {cell.strip()!r} at row {i + 2}, "
                    f"column {header[j]!r}"
                ) from None
            if not math.isfinite(value):
                raise IngestionError(
                    f"{path}: non-finite value {cell.strip()!r} at row {i + 2}, "
                    f"column {header[j]!r}"
                )
            if j == target_idx:
                targets[i] = value
            else:
                features[i, col] = value
                col += 1
    return Task(
        task_id=task_id or path.stem,
        features=features,
        targets=targets,
        feature_names=feature_names,
        example_ids=tuple(example_ids),
    )


def assemble_collection(tasks: list[Task] | tuple[Task, ...], mode: CollectionMode,
                        collection_id: str | None = None) -> TaskCollection:
    """Validate a list of tasks into a collection over one feature space."""
    if len(tasks) < 2:
        raise ValidationError(f"need at least 2 tasks, got {len(tasks)}")
    if collection_id is None:
        h = hashlib.sha256("\x1f".join(tasks[0].feature_names).encode("utf-8"))
        collection_id = f"collection-{h.hexdigest()[:12]}"
    return TaskCollection(tuple(tasks), mode, collection_id)


def load_collection(manifest_path: str | Path) -> TaskCollection:
    """Load a collection from a JSON manifest listing task files."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IngestionError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{manifest_path}: invalid JSON ({exc})") from None
    for key in ("collection_id", "mode", "target", "tasks"):
        if key not in doc:
            raise IngestionError(f"{manifest_path}: manifest missing key {key!r}")
    try:
        mode = CollectionMode(doc["mode"])
    except ValueError:
        raise IngestionError(
            f"{manifest_path}: mode must be 'independent' or 'shared', got {doc['mode']!r}"
        ) from None
    if not isinstance(doc["tasks"], list) or not doc["tasks"]:
        raise IngestionError(f"{manifest_path}: 'tasks' must be a non-empty list of file paths")
    base = manifest_path.parent
    tasks = [load_task(base / rel, target=doc["target"]) for rel in doc["tasks"]]
    return assemble_collection(tasks, mode, collection_id=str(doc["collection_id"]))


def write_task_file(task: Task, path: str | Path, target: str = "y") -> None:
    """Write a task in the standard delimited format (comma-separated)."""
    if target in task.feature_names:
        raise ValidationError(f"target column name {target!r} collides with a feature name")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=",", lineterminator="\n")
        writer.writerow(["id", *task.feature_names, target])
        for i, ex in enumerate(task.example_ids):
            row = [ex] + [repr(float(v)) for v in task.features[i]] + [repr(float(task.targets[i]))]
            writer.writerow(row)


def write_collection(collection: TaskCollection, out_dir: str | Path,
                     target: str = "y") -> Path:
    """Write all task files plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for task in collection.tasks:
        fname = f"{task.task_id}.csv"
        write_task_file(task, out_dir / fname, target=target)
        files.append(fname)
    manifest = {
        "collection_id": collection.feature_space_id,
        "mode": collection.mode.value,
        "target": target,
        "tasks": files,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def split_seed_for_task(master_seed: int, task_id: str) -> int:
    """Per-task split-plan seed, stable in the task id alone."""
    return derive_seed(master_seed, "split", task_id)
