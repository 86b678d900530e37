"""Stacked sentiment ensembles: LR / RF / SVM meta-classifiers over base backends.

Feature vectors concatenate, per base backend in a fixed canonical order, the
one-hot predicted label and the confidence (12 reals for three backends).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import joblib
import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.svm import SVC

from .sentiment import LABELS, LABEL_INDEX, SentimentPrediction, evaluate_backend

STACKER_KINDS = ("logistic_regression", "random_forest", "svm")
FEATURE_SCHEMA_VERSION = 1


class EnsembleError(Exception):
    pass


def encode_stack(preds, backend_order, include_confidence=True) -> np.ndarray:
    """Encode one prediction per base backend into a stacked feature vector.

    Predictions must arrive in the canonical backend order; with confidences
    the vector is 4 entries per backend (one-hot label + confidence).
    """
    if len(preds) != len(backend_order):
        raise EnsembleError(f"expected {len(backend_order)} predictions, got {len(preds)}")
    blocks = []
    for p, expected in zip(preds, backend_order):
        if p.backend_id != expected:
            raise EnsembleError(f"backend order mismatch: got {p.backend_id}, expected {expected}")
        onehot = np.zeros(3)
        onehot[LABEL_INDEX[p.label]] = 1.0
        blocks.append(np.concatenate([onehot, [p.confidence]]) if include_confidence else onehot)
    return np.concatenate(blocks)


def _make_learner(kind: str, seed: int):
    if kind == "logistic_regression":
        return LogisticRegression(penalty="l2", max_iter=2000, random_state=seed)
    if kind == "random_forest":
        return RandomForestClassifier(n_estimators=200, max_depth=None, random_state=seed)
    if kind == "svm":
        return SVC(kernel="rbf", probability=True, random_state=seed)
    raise EnsembleError(f"unknown stacker kind {kind!r}")


@dataclass
class TrainedStacker:
    kind: str
    model: object
    backend_order: tuple
    metrics: dict = field(default_factory=dict)
    schema_version: int = FEATURE_SCHEMA_VERSION


def train_stacker(X, y, kind, backend_order, split=0.8, seed=0) -> TrainedStacker:
    """Train a meta-classifier on stacked features with a seeded shuffle split.

    Held-out metrics follow the same confusion-matrix semantics used for the
    base backends.
    """
    X = np.asarray(X, dtype=float)
    y = list(y)
    if len(X) != len(y):
        raise EnsembleError("X/y length mismatch")
    if len(X) < 10:
        raise EnsembleError(f"need at least 10 samples, got {len(X)}")
    if not 0.0 < split < 1.0:
        raise EnsembleError(f"split fraction {split} outside (0, 1)")
    if len(set(y)) < 2:
        raise EnsembleError("degenerate training labels: only one class present")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(X))
    n_train = int(round(split * len(X)))
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    learner = _make_learner(kind, seed)
    learner.fit(X[train_idx], [y[i] for i in train_idx])
    stacker = TrainedStacker(kind=kind, model=learner, backend_order=tuple(backend_order))
    held_preds = [predict_stacker(stacker, X[i]) for i in test_idx]
    stacker.metrics = evaluate_backend(held_preds, [y[i] for i in test_idx])
    return stacker


def predict_stacker(stacker: TrainedStacker, x) -> SentimentPrediction:
    x = np.asarray(x, dtype=float)
    expected = stacker.model.n_features_in_
    if x.shape != (expected,):
        raise EnsembleError(f"feature dimension mismatch: got {x.shape}, expected ({expected},)")
    label = stacker.model.predict(x.reshape(1, -1))[0]
    if hasattr(stacker.model, "predict_proba"):
        proba = stacker.model.predict_proba(x.reshape(1, -1))[0]
        classes = list(stacker.model.classes_)
        conf = float(proba[classes.index(label)])
    else:
        conf = 1.0
    return SentimentPrediction(label=label, confidence=conf, backend_id=stacker.kind)


def save_stacker(stacker: TrainedStacker, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump({"schema_version": stacker.schema_version, "kind": stacker.kind,
                 "backend_order": list(stacker.backend_order), "metrics": stacker.metrics,
                 "model": stacker.model}, path)


def load_stacker(path: Path) -> TrainedStacker:
    payload = joblib.load(path)
    if payload.get("schema_version") != FEATURE_SCHEMA_VERSION:
        raise EnsembleError(
            f"refusing to load stacker with schema version {payload.get('schema_version')} "
            f"(expected {FEATURE_SCHEMA_VERSION})")
    return TrainedStacker(kind=payload["kind"], model=payload["model"],
                          backend_order=tuple(payload["backend_order"]),
                          metrics=payload.get("metrics", {}))
