"""Binary classification and regression metrics for the experiment runner."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(Exception):
    pass


def _check_binary(preds01, gold01):
    preds = np.asarray(preds01)
    gold = np.asarray(gold01)
    if preds.size == 0 or gold.size == 0:
        raise MetricError("empty input")
    if preds.shape != gold.shape:
        raise MetricError(f"shape mismatch {preds.shape} vs {gold.shape}")
    return preds.astype(int), gold.astype(int)


def _counts(preds, gold):
    tp = int(np.sum((preds == 1) & (gold == 1)))
    fp = int(np.sum((preds == 1) & (gold == 0)))
    fn = int(np.sum((preds == 0) & (gold == 1)))
    tn = int(np.sum((preds == 0) & (gold == 0)))
    return tp, fp, fn, tn


def metric_accuracy(preds01, gold01) -> float:
    preds, gold = _check_binary(preds01, gold01)
    return float(np.mean(preds == gold))


def metric_precision(preds01, gold01) -> float:
    preds, gold = _check_binary(preds01, gold01)
    tp, fp, _, _ = _counts(preds, gold)
    return tp / (tp + fp) if tp + fp else 0.0


def metric_recall(preds01, gold01) -> float:
    preds, gold = _check_binary(preds01, gold01)
    tp, _, fn, _ = _counts(preds, gold)
    return tp / (tp + fn) if tp + fn else 0.0


def metric_f1(preds01, gold01) -> float:
    """Positive-class F1, 0 when the denominator vanishes."""
    p = metric_precision(preds01, gold01)
    r = metric_recall(preds01, gold01)
    return 2 * p * r / (p + r) if p + r else 0.0


def metric_f1_weighted(preds01, gold01) -> float:
    """Support-weighted mean of the per-class F1 scores."""
    preds, gold = _check_binary(preds01, gold01)
    total = gold.size
    out = 0.0
    for cls in (0, 1):
        support = int(np.sum(gold == cls))
        if not support:
            continue
        p = metric_precision(preds == cls, gold == cls)
        r = metric_recall(preds == cls, gold == cls)
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        out += f1 * support / total
    return out


def metric_auc(scores, gold01) -> float:
    """Rank-statistic AUC: probability a random positive outscores a random
    negative, with ties counted as one half."""
    scores = np.asarray(scores, dtype=float)
    gold = np.asarray(gold01).astype(int)
    if scores.size == 0:
        raise MetricError("empty input")
    if scores.shape != gold.shape:
        raise MetricError(f"shape mismatch {scores.shape} vs {gold.shape}")
    n_pos = int(gold.sum())
    n_neg = gold.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: only one class present in gold")
    ranks = rankdata(scores)
    return float((ranks[gold == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _check_real(preds, gold):
    preds = np.asarray(preds, dtype=float)
    gold = np.asarray(gold, dtype=float)
    if preds.size == 0:
        raise MetricError("empty input")
    if preds.shape != gold.shape:
        raise MetricError(f"shape mismatch {preds.shape} vs {gold.shape}")
    return preds, gold


def metric_mae(preds, gold) -> float:
    preds, gold = _check_real(preds, gold)
    return float(np.mean(np.abs(preds - gold)))


def metric_rmse(preds, gold) -> float:
    preds, gold = _check_real(preds, gold)
    return float(np.sqrt(np.mean((preds - gold) ** 2)))


def metric_rse(preds, gold) -> float:
    """Relative squared error: sum of squared errors over squared deviation of
    gold from its mean (1.0 for the gold-mean predictor)."""
    preds, gold = _check_real(preds, gold)
    if gold.size < 2:
        raise MetricError("RSE needs at least 2 samples")
    denom = float(np.sum((gold - gold.mean()) ** 2))
    if denom == 0:
        raise MetricError("RSE undefined: gold series has zero variance")
    return float(np.sum((preds - gold) ** 2) / denom)


CLASSIFICATION_METRICS = ("f1", "f1_weighted", "accuracy", "precision", "recall", "auc")
REGRESSION_METRICS = ("mae", "rmse", "rse")


def classification_metrics(scores, gold01, threshold: float = 0.5) -> dict:
    preds = (np.asarray(scores, dtype=float) >= threshold).astype(int)
    return {
        "f1": metric_f1(preds, gold01),
        "f1_weighted": metric_f1_weighted(preds, gold01),
        "accuracy": metric_accuracy(preds, gold01),
        "precision": metric_precision(preds, gold01),
        "recall": metric_recall(preds, gold01),
        "auc": metric_auc(scores, gold01),
    }


def regression_metrics(preds, gold) -> dict:
    return {
        "mae": metric_mae(preds, gold),
        "rmse": metric_rmse(preds, gold),
        "rse": metric_rse(preds, gold),
    }
