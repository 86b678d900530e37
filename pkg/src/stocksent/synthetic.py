"""Synthetic offline fixture: prices + headlines with planted sentiment signal.

Each ticker follows a persistent ±1 sentiment regime. Headlines are drawn
from lexicon-scored templates matching the regime, and the next-day price
move is driven by the regime from a few days earlier, so daily sentiment
features genuinely predict movement. This makes the whole pipeline (and the
model-trainability checks) demonstrable without network access or model
weights.
"""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

import numpy as np

from .ingestion import NewsItem, PriceBar, save_news_jsonl, save_prices_csv

DEFAULT_TICKERS = ("SYNA", "SYNB", "SYNC")
SIGNAL_LAG_DAYS = 3  # sentiment leads the driven price move by this many trading days

POSITIVE_TEMPLATES = [
    "{t} shares surge after record profit",
    "{t} beats estimates as sales jump",
    "Analysts upgrade {t} on strong growth",
    "{t} stock rallies on earnings beat",
]
NEGATIVE_TEMPLATES = [
    "{t} shares plunge after earnings miss",
    "{t} falls as lawsuit looms",
    "Analysts downgrade {t} on weak outlook",
    "{t} stock drops amid sales slump",
]
NEUTRAL_TEMPLATES = [
    "{t} to hold annual shareholder meeting",
    "{t} announces board changes",
    "{t} schedules quarterly earnings call",
]


def weekday_calendar(start: dt.date, n_days: int) -> list:
    days = []
    d = start
    while len(days) < n_days:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def generate_ticker(ticker: str, dates, rng) -> tuple:
    """Returns (price bars, news items) with the planted correlation."""
    n = len(dates)
    regime = np.empty(n, dtype=int)
    regime[0] = 1
    for t in range(1, n):
        regime[t] = -regime[t - 1] if rng.random() < 0.08 else regime[t - 1]

    closes = np.empty(n)
    closes[0] = 80.0 + 40.0 * rng.random()
    for t in range(1, n):
        drive = regime[max(t - 1 - SIGNAL_LAG_DAYS, 0)]
        eps = rng.uniform(-0.004, 0.004)
        closes[t] = closes[t - 1] * (1.0 + 0.012 * drive + eps)

    bars = [PriceBar(ticker=ticker, date=d, close=float(c),
                     volume=int(rng.integers(1_000_000, 5_000_000)))
            for d, c in zip(dates, closes)]

    items = []
    for t, d in enumerate(dates):
        for i in range(rng.integers(1, 5)):
            if rng.random() < 0.85:
                pool = POSITIVE_TEMPLATES if regime[t] > 0 else NEGATIVE_TEMPLATES
            else:
                pool = NEUTRAL_TEMPLATES
            text = pool[rng.integers(len(pool))].format(t=ticker)
            text = f"{text} ({d.isoformat()} wire {i})"  # keep headlines unique
            items.append(NewsItem(
                id=f"{ticker}-{d.isoformat()}-{i}", ticker=ticker,
                published_at=dt.datetime.combine(d, dt.time(13, 0), tzinfo=dt.timezone.utc),
                headline=text))
    return bars, items


def generate_labeled_corpus(rng, n: int = 600) -> list:
    """(text, gold label) pairs for training/evaluating sentiment stackers."""
    fake_tickers = ["OMEGA", "ZETA", "KAPPA", "DELTA", "SIGMA", "THETA"]
    rows = []
    for i in range(n):
        r = rng.random()
        if r < 0.4:
            pool, gold = POSITIVE_TEMPLATES, "positive"
        elif r < 0.8:
            pool, gold = NEGATIVE_TEMPLATES, "negative"
        else:
            pool, gold = NEUTRAL_TEMPLATES, "neutral"
        name = fake_tickers[rng.integers(len(fake_tickers))]
        text = pool[rng.integers(len(pool))].format(t=name) + f" (item {i})"
        rows.append((text, gold))
    return rows


def generate_fixture(out_dir: Path, tickers=DEFAULT_TICKERS, n_days: int = 400,
                     start: dt.date = dt.date(2022, 3, 10), seed: int = 7) -> dict:
    """Write the raw stores for a full offline pipeline run.

    Produces prices_{ticker}.csv, news_{ticker}.jsonl, labeled_corpus.csv and
    a manifest.json under ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    dates = weekday_calendar(start, n_days)
    manifest = {"tickers": list(tickers), "n_days": n_days, "seed": seed,
                "start": start.isoformat(), "signal_lag_days": SIGNAL_LAG_DAYS,
                "files": {}}
    for ticker in tickers:
        bars, items = generate_ticker(ticker, dates, rng)
        save_prices_csv(bars, out_dir / f"prices_{ticker}.csv")
        save_news_jsonl(items, out_dir / f"news_{ticker}.jsonl")
        manifest["files"][ticker] = {
            "prices": f"prices_{ticker}.csv", "news": f"news_{ticker}.jsonl",
            "n_news": len(items)}

    import csv

    corpus = generate_labeled_corpus(rng)
    with open(out_dir / "labeled_corpus.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["text", "label"])
        w.writerows(corpus)
    manifest["labeled_corpus"] = "labeled_corpus.csv"
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
