import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stocksent.metrics import (MetricError, classification_metrics, metric_accuracy,
                               metric_auc, metric_f1, metric_f1_weighted, metric_mae,
                               metric_precision, metric_recall, metric_rmse,
                               metric_rse, regression_metrics)


def brute_force_auc(scores, gold):
    """O(n^2) pairwise oracle: ties count 0.5."""
    pos = [s for s, g in zip(scores, gold) if g == 1]
    neg = [s for s, g in zip(scores, gold) if g == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


class TestBinaryMetrics:
    def test_perfect(self):
        gold = [1, 0, 1, 0]
        for fn in (metric_f1, metric_accuracy, metric_precision, metric_recall):
            assert fn(gold, gold) == 1.0

    def test_hand_confusion_oracle(self):
        gold, preds = [1, 1, 0, 0], [1, 0, 0, 0]
        assert metric_precision(preds, gold) == 1.0
        assert metric_recall(preds, gold) == 0.5
        assert metric_f1(preds, gold) == pytest.approx(2 / 3)

    def test_zero_division_convention(self):
        gold, preds = [1, 0, 1], [0, 0, 0]
        assert metric_recall(preds, gold) == 0.0
        assert metric_f1(preds, gold) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            metric_f1([], [])

    def test_weighted_f1_hand_check(self):
        gold, preds = [1, 1, 0, 0], [1, 0, 0, 0]
        # class 1: f1 = 2/3 (support 2); class 0: p=2/3, r=1 -> f1 = 4/5 (support 2)
        assert metric_f1_weighted(preds, gold) == pytest.approx(0.5 * (2 / 3) + 0.5 * (4 / 5))


class TestAUC:
    def test_derived_example(self):
        assert metric_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_perfect_ranking(self):
        assert metric_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert metric_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_single_class_undefined(self):
        with pytest.raises(MetricError, match="undefined"):
            metric_auc([0.1, 0.2], [1, 1])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]),
                              st.integers(0, 1)), min_size=2, max_size=200)
           .filter(lambda xs: len({g for _, g in xs}) == 2))
    def test_matches_brute_force(self, pairs):
        scores = [s for s, _ in pairs]
        gold = [g for _, g in pairs]
        assert metric_auc(scores, gold) == pytest.approx(brute_force_auc(scores, gold))


class TestRegressionMetrics:
    def test_mean_predictor_has_rse_one(self):
        gold = np.array([1.0, 2.0, 5.0, 7.0])
        preds = np.full(4, gold.mean())
        assert metric_rse(preds, gold) == pytest.approx(1.0)

    def test_perfect_prediction(self):
        gold = [1.0, 2.0, 3.0]
        assert metric_mae(gold, gold) == 0.0
        assert metric_rmse(gold, gold) == 0.0
        assert metric_rse(gold, gold) == 0.0

    def test_hand_arithmetic(self):
        gold, preds = [1.0, 2.0, 3.0], [2.0, 2.0, 2.0]
        assert metric_mae(preds, gold) == pytest.approx(2 / 3)
        assert metric_rmse(preds, gold) == pytest.approx(np.sqrt(2 / 3))
        assert metric_rse(preds, gold) == pytest.approx(1.0)

    def test_zero_variance_gold(self):
        with pytest.raises(MetricError, match="zero variance"):
            metric_rse([1.0, 2.0], [3.0, 3.0])

    def test_rse_needs_two(self):
        with pytest.raises(MetricError):
            metric_rse([1.0], [1.0])


class TestBundles:
    def test_classification_bundle_threshold(self):
        scores = [0.2, 0.6, 0.7, 0.4]
        gold = [0, 1, 1, 0]
        m = classification_metrics(scores, gold)
        assert m["accuracy"] == 1.0
        assert m["auc"] == 1.0
        assert set(m) == {"f1", "f1_weighted", "accuracy", "precision", "recall", "auc"}

    def test_regression_bundle(self):
        m = regression_metrics([1.0, 1.1], [1.0, 1.2])
        assert set(m) == {"mae", "rmse", "rse"}
