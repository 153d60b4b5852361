"""Regression learners behind one fit/predict contract."""

from .archive import load_model, save_model
from .base import (EMPTY_FINGERPRINT, FittedModel, LearnerKind, LearnerSpec,
                   Standardizer, TrainFingerprint, fit_learner, predict)
from .forest import fit_forest
from .ridge import fit_ridge, fit_ridge_cv
from .svr import dual_objective, fit_svr, rbf_gram, rbf_kernel

__all__ = [
    "EMPTY_FINGERPRINT",
    "FittedModel",
    "LearnerKind",
    "LearnerSpec",
    "Standardizer",
    "TrainFingerprint",
    "dual_objective",
    "fit_forest",
    "fit_learner",
    "fit_ridge",
    "fit_ridge_cv",
    "fit_svr",
    "load_model",
    "predict",
    "rbf_gram",
    "rbf_kernel",
    "save_model",
]
