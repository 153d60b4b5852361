"""Self-describing model archives.

One JSON document per model: versioned header, spec echo, fingerprint,
standardization parameters, and the fitted state with arrays stored as
base64 raw bytes so a round trip reproduces bitwise-identical predictions.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from ..errors import IngestionError
from .base import FittedModel, LearnerKind, LearnerSpec, Standardizer, TrainFingerprint
from .forest import ForestState, Tree
from .ridge import RidgeState
from .svr import SvrState

FORMAT_NAME = "crossrep-model"
FORMAT_VERSION = 1


def _enc(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    return {"dtype": arr.dtype.str, "shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _dec(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"]).copy()


def _state_to_doc(model: FittedModel) -> dict:
    s = model.state
    if isinstance(s, RidgeState):
        return {"coef": _enc(s.coef), "intercept": s.intercept, "lam": s.lam}
    if isinstance(s, ForestState):
        return {
            "seed": s.seed, "mtry": s.mtry, "min_node_size": s.min_node_size,
            "trees": [{"feature": _enc(t.feature), "threshold": _enc(t.threshold),
                       "left": _enc(t.left), "right": _enc(t.right),
                       "value": _enc(t.value)} for t in s.trees],
        }
    if isinstance(s, SvrState):
        return {"support": _enc(s.support), "dual_coef": _enc(s.dual_coef),
                "bias": s.bias, "sigma": s.sigma, "n_iter": s.n_iter,
                "kkt_gap": s.kkt_gap}
    raise IngestionError(f"cannot archive state of type {type(s).__name__}")


def _state_from_doc(kind: LearnerKind, doc: dict):
    if kind in (LearnerKind.RIDGE, LearnerKind.RIDGE_CV):
        return RidgeState(coef=_dec(doc["coef"]), intercept=float(doc["intercept"]),
                          lam=float(doc["lam"]))
    if kind is LearnerKind.FOREST:
        trees = tuple(
            Tree(feature=_dec(t["feature"]), threshold=_dec(t["threshold"]),
                 left=_dec(t["left"]), right=_dec(t["right"]), value=_dec(t["value"]))
            for t in doc["trees"]
        )
        return ForestState(trees=trees, seed=int(doc["seed"]), mtry=int(doc["mtry"]),
                           min_node_size=int(doc["min_node_size"]))
    if kind is LearnerKind.SVR:
        return SvrState(support=_dec(doc["support"]), dual_coef=_dec(doc["dual_coef"]),
                        bias=float(doc["bias"]), sigma=float(doc["sigma"]),
                        n_iter=int(doc["n_iter"]), kkt_gap=float(doc["kkt_gap"]))
    raise IngestionError(f"cannot restore state for kind {kind}")


def save_model(model: FittedModel, path: str | Path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "feature_count": model.feature_count,
        "train_fingerprint": {"task_id": model.train_fingerprint.task_id,
                              "row_ids": list(model.train_fingerprint.row_ids)},
        "standardization": None if model.standardization is None else
                           {"mean": _enc(model.standardization.mean),
                            "scale": _enc(model.standardization.scale)},
        "state": _state_to_doc(model),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> FittedModel:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"model archive not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT_NAME:
        raise IngestionError(f"{path}: not a {FORMAT_NAME} archive")
    if doc.get("version") != FORMAT_VERSION:
        raise IngestionError(f"{path}: unsupported archive version {doc.get('version')}")
    spec = LearnerSpec.from_dict(doc["spec"])
    fp = TrainFingerprint(task_id=doc["train_fingerprint"]["task_id"],
                          row_ids=tuple(doc["train_fingerprint"]["row_ids"]))
    std_doc = doc["standardization"]
    std = None if std_doc is None else Standardizer(mean=_dec(std_doc["mean"]),
                                                    scale=_dec(std_doc["scale"]))
    return FittedModel(spec=spec, state=_state_from_doc(spec.kind, doc["state"]),
                       feature_count=int(doc["feature_count"]),
                       train_fingerprint=fp, standardization=std)
