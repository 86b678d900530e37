import datetime as dt

import pytest
from hypothesis import given, strategies as st

from stocksent.aggregation import (ABLATION_VARIANTS, AggregationError,
                                   MARKET_FEATURES, aggregate_day,
                                   save_daily_features_csv, select_features,
                                   signed_score)
from stocksent.sentiment import LABELS, SentimentPrediction


def pred(label, conf):
    return SentimentPrediction(label=label, confidence=conf, backend_id="t")


prediction_strategy = st.builds(
    pred, st.sampled_from(LABELS), st.sampled_from([0.25, 0.5, 1.0]))


class TestSignedScore:
    def test_polarity(self):
        assert signed_score(pred("positive", 0.9)) == 0.9
        assert signed_score(pred("neutral", 0.99)) == 0.0
        assert signed_score(pred("negative", 0.6)) == -0.6


class TestAggregateDay:
    def test_empty_day_convention(self):
        f = aggregate_day([])
        assert (f.count_neg, f.count_neu, f.count_pos) == (0, 0, 0)
        assert (f.score_sum, f.score_min, f.score_max) == (0.0, 0.0, 0.0)
        assert f.majority == "neutral"

    def test_enumeration_example(self):
        f = aggregate_day([pred("positive", 0.9), pred("negative", 0.6),
                           pred("positive", 0.55)])
        assert (f.count_neg, f.count_neu, f.count_pos) == (1, 0, 2)
        assert f.score_sum == pytest.approx(0.85)
        assert f.score_min == -0.6
        assert f.score_max == 0.9
        assert f.majority == "positive"

    def test_tie_breaks_to_neutral(self):
        f = aggregate_day([pred("positive", 0.5), pred("negative", 0.5)])
        assert f.majority == "neutral"

    @given(prediction_strategy)
    def test_singleton(self, p):
        f = aggregate_day([p])
        assert f.score_sum == f.score_min == f.score_max == signed_score(p)
        assert f.majority == p.label

    @given(st.lists(prediction_strategy, max_size=8), st.randoms())
    def test_permutation_invariant(self, preds, rnd):
        shuffled = list(preds)
        rnd.shuffle(shuffled)
        assert aggregate_day(shuffled) == aggregate_day(preds)

    @given(st.lists(prediction_strategy, max_size=8))
    def test_sum_bounded_by_polar_counts(self, preds):
        f = aggregate_day(preds)
        assert abs(f.score_sum) <= f.count_neg + f.count_pos + 1e-12
        assert f.count_neg + f.count_neu + f.count_pos == len(preds)
        if preds:
            assert f.score_min <= f.score_max


class TestSelectFeatures:
    def test_dimensions(self):
        dims = {v: len(select_features(v)) for v in ABLATION_VARIANTS}
        assert dims == {"full": 11, "wo_count": 8, "wo_sum": 10,
                        "wo_count_sum": 7, "wo_majority": 8}

    def test_market_always_retained_and_order_stable(self):
        for v in ABLATION_VARIANTS:
            names = select_features(v)
            assert names[-2:] == MARKET_FEATURES
            assert names == [n for n in select_features("full") if n in names]

    def test_wo_sum_minmax_flag(self):
        assert "score_min" in select_features("wo_sum")
        assert "score_min" not in select_features("wo_sum", wo_sum_drops_minmax=True)
        assert len(select_features("wo_count_sum", wo_sum_drops_minmax=True)) == 5

    def test_unknown_variant(self):
        with pytest.raises(AggregationError):
            select_features("wo_everything")


def test_daily_csv_layout(tmp_path):
    rows = [("MSFT", dt.date(2024, 1, 2), aggregate_day([pred("positive", 1.0)]))]
    save_daily_features_csv(rows, tmp_path / "d.csv")
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == ("ticker,date,count_neg,count_neu,count_pos,"
                      "score_sum,score_min,score_max,maj_neg,maj_neu,maj_pos")
