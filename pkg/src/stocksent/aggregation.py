"""Daily aggregation of article-level sentiment and ablation feature selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .sentiment import LABELS, SentimentPrediction

SENTIMENT_FEATURES = [
    "count_neg", "count_neu", "count_pos",
    "score_sum", "score_min", "score_max",
    "maj_neg", "maj_neu", "maj_pos",
]
MARKET_FEATURES = ["close", "volume"]

ABLATION_VARIANTS = ("full", "wo_count", "wo_sum", "wo_count_sum", "wo_majority")


class AggregationError(Exception):
    pass


@dataclass(frozen=True)
class DailySentimentFeatures:
    count_neg: int
    count_neu: int
    count_pos: int
    score_sum: float
    score_min: float
    score_max: float
    majority: str  # one of LABELS

    def as_row(self) -> dict:
        return {
            "count_neg": self.count_neg, "count_neu": self.count_neu,
            "count_pos": self.count_pos, "score_sum": self.score_sum,
            "score_min": self.score_min, "score_max": self.score_max,
            "maj_neg": float(self.majority == "negative"),
            "maj_neu": float(self.majority == "neutral"),
            "maj_pos": float(self.majority == "positive"),
        }


def signed_score(p: SentimentPrediction) -> float:
    """Confidence-weighted polarity: negative -> -conf, neutral -> 0, positive -> +conf."""
    if p.label == "positive":
        return p.confidence
    if p.label == "negative":
        return -p.confidence
    return 0.0


def aggregate_day(preds) -> DailySentimentFeatures:
    """Collapse one trading day's predictions into counts, signed-score
    sum/min/max, and the majority-vote class (ties and empty days -> neutral)."""
    counts = {l: 0 for l in LABELS}
    for p in preds:
        counts[p.label] += 1
    if not preds:
        return DailySentimentFeatures(0, 0, 0, 0.0, 0.0, 0.0, "neutral")
    scores = [signed_score(p) for p in preds]
    best = max(counts.values())
    winners = [l for l in LABELS if counts[l] == best]
    majority = winners[0] if len(winners) == 1 else "neutral"
    return DailySentimentFeatures(
        count_neg=counts["negative"], count_neu=counts["neutral"],
        count_pos=counts["positive"], score_sum=sum(scores),
        score_min=min(scores), score_max=max(scores), majority=majority)


def select_features(variant: str, wo_sum_drops_minmax: bool = False) -> list:
    """Ordered feature-name list for an ablation variant.

    Market features (close, volume) are always retained; the ``wo_sum``
    variants optionally also drop min/max via ``wo_sum_drops_minmax``.
    """
    if variant not in ABLATION_VARIANTS:
        raise AggregationError(f"unknown ablation variant {variant!r}")
    dropped = set()
    if variant in ("wo_count", "wo_count_sum"):
        dropped |= {"count_neg", "count_neu", "count_pos"}
    if variant in ("wo_sum", "wo_count_sum"):
        dropped.add("score_sum")
        if wo_sum_drops_minmax:
            dropped |= {"score_min", "score_max"}
    if variant == "wo_majority":
        dropped |= {"maj_neg", "maj_neu", "maj_pos"}
    return [f for f in SENTIMENT_FEATURES if f not in dropped] + MARKET_FEATURES


DAILY_CSV_HEADER = ["ticker", "date"] + SENTIMENT_FEATURES


def save_daily_features_csv(rows, path: Path) -> None:
    """Persist per-day aggregates; ``rows`` is a list of (ticker, date, DailySentimentFeatures)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=DAILY_CSV_HEADER)
        w.writeheader()
        for ticker, date, feats in rows:
            row = {"ticker": ticker, "date": date.isoformat()}
            row.update(feats.as_row())
            w.writerow(row)
