import datetime as dt

import pytest
from hypothesis import given, strategies as st

from stocksent.ingestion import (IngestionError, NewsItem, NoDataError, PriceBar,
                                 RateLimitError, RetriableFetchError, TradingCalendar,
                                 align_to_trading_day, fetch_news, fetch_prices,
                                 forward_fill, load_news_jsonl, load_prices_csv,
                                 save_news_jsonl, save_prices_csv)


def d(iso):
    return dt.date.fromisoformat(iso)


def ts(iso):
    return dt.datetime.fromisoformat(iso).replace(tzinfo=dt.timezone.utc)


WEEK = [d("2024-01-01"), d("2024-01-02"), d("2024-01-03"), d("2024-01-04"),
        d("2024-01-08")]  # Friday 2024-01-05 is a holiday here


class FakePriceSource:
    def __init__(self, dates):
        self.dates = dates

    def get_prices(self, ticker, start, end):
        for i, day in enumerate(self.dates):
            if start <= day <= end:
                yield {"date": day, "close": 100.0 + i, "volume": 1000 + i}


class FakeNewsSource:
    def __init__(self, records, rate_limit_failures=0):
        self.records = records
        self.failures_left = rate_limit_failures
        self.calls = 0

    def get_news(self, ticker, start, end):
        self.calls += 1
        if self.failures_left > 0:
            self.failures_left -= 1
            raise RateLimitError("throttled")
        return list(self.records)


class TestForwardFill:
    def test_fills_gaps(self):
        series = [(WEEK[0], 100.0), (WEEK[1], None), (WEEK[2], None), (WEEK[3], 103.0)]
        assert [v for _, v in forward_fill(series)] == [100.0, 100.0, 100.0, 103.0]

    def test_identity_on_complete(self):
        assert forward_fill([(WEEK[0], 5.0)]) == [(WEEK[0], 5.0)]

    def test_leading_gap_errors(self):
        with pytest.raises(IngestionError, match="leading"):
            forward_fill([(WEEK[0], None), (WEEK[1], 7.0)])

    @given(st.lists(st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False)),
                    min_size=1).filter(lambda xs: xs[0] is not None))
    def test_idempotent(self, values):
        series = list(enumerate(values))
        once = forward_fill(series)
        assert forward_fill(once) == once


class TestAlignment:
    def test_saturday_rolls_to_monday(self):
        cal = TradingCalendar(WEEK)
        assert align_to_trading_day(ts("2024-01-06T14:00:00"), cal) == d("2024-01-08")

    def test_trading_day_maps_to_itself(self):
        cal = TradingCalendar(WEEK)
        assert align_to_trading_day(ts("2024-01-03T09:00:00"), cal) == d("2024-01-03")

    def test_friday_holiday_rolls_forward(self):
        # enumerate the calendar around the missing Friday and verify the roll
        cal = TradingCalendar(WEEK)
        assert d("2024-01-05") not in cal
        assert align_to_trading_day(ts("2024-01-05T10:00:00"), cal) == d("2024-01-08")

    def test_beyond_calendar_errors(self):
        with pytest.raises(IngestionError, match="beyond calendar"):
            align_to_trading_day(ts("2024-02-01T00:00:00"), TradingCalendar(WEEK))

    @given(st.integers(min_value=0, max_value=40))
    def test_output_in_calendar_and_not_before_input(self, offset):
        cal = TradingCalendar(WEEK)
        when = dt.datetime(2023, 12, 20, tzinfo=dt.timezone.utc) + dt.timedelta(days=offset)
        if when.date() > cal.last:
            return
        out = align_to_trading_day(when, cal)
        assert out in cal
        assert out >= when.date()

    def test_calendar_rejects_weekends(self):
        with pytest.raises(ValueError, match="weekend"):
            TradingCalendar([d("2024-01-06")])

    def test_calendar_rejects_unordered(self):
        with pytest.raises(ValueError, match="increasing"):
            TradingCalendar([WEEK[1], WEEK[0]])


class TestFetchPrices:
    def test_study_window_returns_sorted_bars(self, tmp_path):
        source = FakePriceSource(WEEK)
        bars = fetch_prices("MSFT", WEEK[0], WEEK[-1], source,
                            store_path=tmp_path / "p.csv")
        assert [b.date for b in bars] == WEEK
        assert load_prices_csv(tmp_path / "p.csv") == bars

    def test_single_trading_day(self):
        bars = fetch_prices("MSFT", WEEK[2], WEEK[2], FakePriceSource(WEEK))
        assert len(bars) == 1

    def test_weekend_range_is_no_data(self):
        with pytest.raises(NoDataError, match="MSFT"):
            fetch_prices("MSFT", d("2024-01-06"), d("2024-01-07"), FakePriceSource(WEEK))

    def test_source_exception_becomes_retriable(self):
        class Broken:
            def get_prices(self, *a):
                raise OSError("connection reset")

        with pytest.raises(RetriableFetchError, match="connection reset"):
            fetch_prices("MSFT", WEEK[0], WEEK[-1], Broken())

    def test_start_after_end_rejected(self):
        with pytest.raises(ValueError):
            fetch_prices("MSFT", WEEK[1], WEEK[0], FakePriceSource(WEEK))


class TestFetchNews:
    RECORDS = [
        {"id": "a", "published_at": "2024-01-02T10:00:00+00:00", "headline": "one"},
        {"id": "a", "published_at": "2024-01-02T10:00:00+00:00", "headline": "one again"},
        {"id": "b", "published_at": "2024-01-03T10:00:00+00:00", "headline": "two"},
        {"id": "c", "published_at": "2024-01-03T10:00:00+00:00"},  # missing headline
    ]

    def test_dedup_and_skip(self, tmp_path):
        result = fetch_news("TSLA", WEEK[0], WEEK[-1], FakeNewsSource(self.RECORDS),
                            store_path=tmp_path / "n.jsonl")
        assert [it.id for it in result.items] == ["a", "b"]
        assert result.skipped == 1
        assert load_news_jsonl(tmp_path / "n.jsonl") == result.items

    def test_timestamps_parse_as_utc(self):
        result = fetch_news("TSLA", WEEK[0], WEEK[-1], FakeNewsSource(self.RECORDS))
        assert all(it.published_at.tzinfo is not None for it in result.items)

    def test_backoff_then_success(self):
        sleeps = []
        source = FakeNewsSource(self.RECORDS, rate_limit_failures=3)
        result = fetch_news("TSLA", WEEK[0], WEEK[-1], source, sleep=sleeps.append)
        assert result.retries == 3
        assert sleeps == [1.0, 2.0, 4.0]  # exponential backoff

    def test_retry_cap(self):
        source = FakeNewsSource(self.RECORDS, rate_limit_failures=10)
        with pytest.raises(RateLimitError):
            fetch_news("TSLA", WEEK[0], WEEK[-1], source, max_retries=5,
                       sleep=lambda s: None)
        assert source.calls == 6


class TestStores:
    def test_price_round_trip_is_exact(self, tmp_path):
        bars = [PriceBar("X", WEEK[i], 100.0 / 3 * (i + 1), i * 7) for i in range(5)]
        save_prices_csv(bars, tmp_path / "p.csv")
        assert load_prices_csv(tmp_path / "p.csv") == bars

    def test_news_round_trip_is_exact(self, tmp_path):
        items = [NewsItem(f"id{i}", "X", ts(f"2024-01-0{i + 1}T08:30:00"),
                          f"headline {i} with \"quotes\" and, commas")
                 for i in range(4)]
        save_news_jsonl(items, tmp_path / "n.jsonl")
        assert load_news_jsonl(tmp_path / "n.jsonl") == items

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            PriceBar("X", WEEK[0], -1.0, 10)
        with pytest.raises(ValueError):
            PriceBar("X", WEEK[0], 10.0, -1)
        with pytest.raises(ValueError):
            NewsItem("i", "X", ts("2024-01-02T00:00:00"), "")
