"""Market price / news ingestion, persistence, and trading-calendar alignment.

Raw stores are human-auditable: prices as CSV (``ticker,date,close,volume``),
news as JSON-Lines (``id,ticker,published_at,headline``). The trading calendar
is derived from the price bars themselves, so no external holiday database is
needed.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

logger = logging.getLogger(__name__)


class IngestionError(Exception):
    pass


class NoDataError(IngestionError):
    """The source returned nothing for the requested ticker/range."""


class RetriableFetchError(IngestionError):
    """Transient transport/auth failure; safe to retry."""


class RateLimitError(RetriableFetchError):
    """The source is throttling us."""


@dataclass(frozen=True)
class PriceBar:
    ticker: str
    date: dt.date
    close: float
    volume: int

    def __post_init__(self):
        if self.close <= 0:
            raise ValueError(f"close must be > 0, got {self.close}")
        if self.volume < 0:
            raise ValueError(f"volume must be >= 0, got {self.volume}")


@dataclass(frozen=True)
class NewsItem:
    id: str
    ticker: str
    published_at: dt.datetime  # UTC
    headline: str

    def __post_init__(self):
        if not self.headline:
            raise ValueError("headline must be non-empty")


class TradingCalendar:
    """Ordered set of trading dates. Strictly increasing, no weekends."""

    def __init__(self, dates: Iterable[dt.date]):
        dates = list(dates)
        if not dates:
            raise ValueError("calendar must be non-empty")
        for prev, cur in zip(dates, dates[1:]):
            if cur <= prev:
                raise ValueError(f"calendar dates not strictly increasing at {cur}")
        for d in dates:
            if d.weekday() >= 5:
                raise ValueError(f"calendar contains weekend date {d}")
        self.dates = dates

    @classmethod
    def from_price_bars(cls, bars: Iterable[PriceBar]) -> "TradingCalendar":
        return cls(sorted({b.date for b in bars}))

    def __len__(self):
        return len(self.dates)

    def __contains__(self, d: dt.date):
        i = bisect.bisect_left(self.dates, d)
        return i < len(self.dates) and self.dates[i] == d

    @property
    def last(self) -> dt.date:
        return self.dates[-1]


def align_to_trading_day(ts: dt.datetime, cal: TradingCalendar) -> dt.date:
    """Map a UTC publication timestamp to its trading day.

    A timestamp on a trading date maps to that date; weekend/holiday
    timestamps roll forward to the next trading date.
    """
    d = ts.date()
    i = bisect.bisect_left(cal.dates, d)
    if i >= len(cal.dates):
        raise IngestionError(f"timestamp {ts.isoformat()} is beyond calendar end {cal.last}")
    return cal.dates[i]


def forward_fill(series):
    """Fill missing values with the nearest preceding value.

    ``series`` is a list of (date, value-or-None) pairs; the first entry must
    carry a value.
    """
    if not series:
        return []
    if series[0][1] is None:
        raise IngestionError("leading missing value: no predecessor to fill from")
    out = []
    last = None
    for date, value in series:
        if value is None:
            value = last
        last = value
        out.append((date, value))
    return out


# ---------------------------------------------------------------------------
# Fetching


def fetch_prices(ticker: str, start: dt.date, end: dt.date, source,
                 store_path: Optional[Path] = None) -> list[PriceBar]:
    """Fetch daily bars from ``source`` and optionally persist them as CSV.

    ``source`` must expose ``get_prices(ticker, start, end)`` yielding dicts
    with date/close/volume.
    """
    if start > end:
        raise ValueError(f"start {start} after end {end}")
    try:
        raw = list(source.get_prices(ticker, start, end))
    except RetriableFetchError:
        raise
    except Exception as exc:  # transport layer surprises
        raise RetriableFetchError(f"price source failed for {ticker}: {exc}") from exc
    bars = []
    for rec in raw:
        d = rec["date"] if isinstance(rec["date"], dt.date) else dt.date.fromisoformat(rec["date"])
        if start <= d <= end:
            bars.append(PriceBar(ticker=ticker, date=d, close=float(rec["close"]),
                                 volume=int(rec["volume"])))
    bars.sort(key=lambda b: b.date)
    if not bars:
        raise NoDataError(f"no price data for {ticker} in [{start}, {end}]")
    if store_path is not None:
        save_prices_csv(bars, store_path)
    return bars


@dataclass
class NewsFetchResult:
    items: list[NewsItem]
    skipped: int = 0
    retries: int = 0


def fetch_news(ticker: str, start: dt.date, end: dt.date, source,
               store_path: Optional[Path] = None, max_retries: int = 5,
               backoff_base: float = 1.0,
               sleep: Callable[[float], None] = time.sleep) -> NewsFetchResult:
    """Fetch news items, dedup by id, skip malformed records, persist as JSONL.

    Rate-limit responses are retried with exponential backoff up to
    ``max_retries`` times.
    """
    attempt = 0
    while True:
        try:
            raw = list(source.get_news(ticker, start, end))
            break
        except RateLimitError:
            if attempt >= max_retries:
                raise
            sleep(backoff_base * (2 ** attempt))
            attempt += 1
    seen = set()
    items = []
    skipped = 0
    for rec in raw:
        try:
            ts = rec["published_at"]
            if not isinstance(ts, dt.datetime):
                ts = dt.datetime.fromisoformat(str(ts).replace("Z", "+00:00"))
            item = NewsItem(id=str(rec["id"]), ticker=ticker,
                            published_at=ts, headline=rec["headline"])
        except (KeyError, ValueError, TypeError) as exc:
            skipped += 1
            logger.warning("skipping malformed news record for %s: %s", ticker, exc)
            continue
        if item.id in seen:
            continue
        seen.add(item.id)
        items.append(item)
    if store_path is not None:
        save_news_jsonl(items, store_path)
    return NewsFetchResult(items=items, skipped=skipped, retries=attempt)


# ---------------------------------------------------------------------------
# Raw stores

PRICE_HEADER = ["ticker", "date", "close", "volume"]


def save_prices_csv(bars: list[PriceBar], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(PRICE_HEADER)
        for b in bars:
            w.writerow([b.ticker, b.date.isoformat(), repr(b.close), b.volume])


def load_prices_csv(path: Path) -> list[PriceBar]:
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        return [PriceBar(ticker=row["ticker"], date=dt.date.fromisoformat(row["date"]),
                         close=float(row["close"]), volume=int(row["volume"]))
                for row in r]


def save_news_jsonl(items: list[NewsItem], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for it in items:
            f.write(json.dumps({
                "id": it.id, "ticker": it.ticker,
                "published_at": it.published_at.isoformat(),
                "headline": it.headline,
            }) + "\n")


def load_news_jsonl(path: Path) -> list[NewsItem]:
    items = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            items.append(NewsItem(id=rec["id"], ticker=rec["ticker"],
                                  published_at=dt.datetime.fromisoformat(rec["published_at"]),
                                  headline=rec["headline"]))
    return items


# ---------------------------------------------------------------------------
# HTTP clients (thin; the harness is normally exercised with fakes or the
# synthetic fixture)


class YahooPriceClient:
    """Daily bars from a Yahoo-Finance-compatible chart endpoint."""

    def __init__(self, endpoint="https://query1.finance.yahoo.com/v8/finance/chart"):
        self.endpoint = endpoint

    def get_prices(self, ticker, start, end):
        import requests

        epoch = lambda d: int(dt.datetime.combine(d, dt.time(), tzinfo=dt.timezone.utc).timestamp())
        url = f"{self.endpoint}/{ticker}"
        params = {"period1": epoch(start), "period2": epoch(end + dt.timedelta(days=1)),
                  "interval": "1d"}
        try:
            resp = requests.get(url, params=params, timeout=30)
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise RetriableFetchError(f"yahoo fetch failed: {exc}") from exc
        result = payload["chart"]["result"][0]
        quote = result["indicators"]["quote"][0]
        for ts, close, vol in zip(result["timestamp"], quote["close"], quote["volume"]):
            if close is None:
                continue
            yield {"date": dt.datetime.fromtimestamp(ts, dt.timezone.utc).date(),
                   "close": close, "volume": vol or 0}


class AlphaVantageNewsClient:
    """News sentiment feed from an AlphaVantage-compatible endpoint.

    Reads the API key from ``ALPHAVANTAGE_API_KEY``; throttles client-side to
    one request per ``min_interval`` seconds.
    """

    def __init__(self, endpoint="https://www.alphavantage.co/query", min_interval=1.0):
        import os

        self.endpoint = endpoint
        self.min_interval = min_interval
        self._last_request = 0.0
        self.api_key = os.environ.get("ALPHAVANTAGE_API_KEY")
        if not self.api_key:
            raise IngestionError("ALPHAVANTAGE_API_KEY not set in environment")

    def get_news(self, ticker, start, end):
        import requests

        wait = self.min_interval - (time.monotonic() - self._last_request)
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()
        params = {"function": "NEWS_SENTIMENT", "tickers": ticker,
                  "time_from": start.strftime("%Y%m%dT0000"),
                  "time_to": end.strftime("%Y%m%dT2359"),
                  "limit": 1000, "apikey": self.api_key}
        try:
            resp = requests.get(self.endpoint, params=params, timeout=30)
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise RetriableFetchError(f"alphavantage fetch failed: {exc}") from exc
        if "Note" in payload or "Information" in payload:
            raise RateLimitError(str(payload))
        for rec in payload.get("feed", []):
            yield {"id": rec.get("url", ""), "published_at":
                   dt.datetime.strptime(rec["time_published"], "%Y%m%dT%H%M%S")
                   .replace(tzinfo=dt.timezone.utc),
                   "headline": rec.get("title", "")}
