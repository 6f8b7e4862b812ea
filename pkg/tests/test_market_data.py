import datetime as dt
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_bars
from finvision.errors import DataError
from finvision.market_data import (Bar, IndicatorParams, NewsStore, compute_indicators, load_bars,
                                   load_news, trading_days, write_bars)
from finvision.synthetic import US_HOLIDAYS_2023, bars_from_closes, business_days, flat_bars, make_news, write_news

D = dt.date


# --------------------------------------------------------------------------
# bars


def test_single_row_without_header(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("2023-06-01,180.0,182.0,179.0,181.0,1000000\n")
    (bar,) = load_bars(p)
    assert bar == Bar(D(2023, 6, 1), 180.0, 182.0, 179.0, 181.0, 1_000_000.0)


def test_rows_are_sorted(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,open,high,low,close,volume\n"
                 "2023-06-02,1,2,1,2,10\n"
                 "2023-06-01,1,2,1,1,10\n")
    assert [b.date for b in load_bars(p)] == [D(2023, 6, 1), D(2023, 6, 2)]


def test_ohlc_violation_names_the_row(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,open,high,low,close,volume\n"
                 "2023-06-01,180,182,179,181,1\n"
                 "2023-06-02,183.0,182.0,185.0,181.0,1\n")
    with pytest.raises(DataError, match="line 3") as err:
        load_bars(p)
    assert "OHLC" in str(err.value)


@pytest.mark.parametrize("body,fragment", [
    ("2023-06-01,1,2,1,x,10\n", "malformed"),
    ("2023-06-01,1,2,1\n", "expected 6 or 7"),
    ("2023-06-01,1,2,1,1,10\n2023-06-01,1,2,1,1,10\n", "duplicate"),
    ("2023-06-01,1,2,1,1,-5\n", "volume"),
    ("", "empty"),
])
def test_bad_bar_files(tmp_path, body, fragment):
    p = tmp_path / "b.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=fragment):
        load_bars(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        load_bars(tmp_path / "nope.csv")


def test_write_then_load_round_trips(tmp_path):
    bars = random_bars(40, seed=3)
    bars[5] = Bar(bars[5].date, bars[5].open, bars[5].high, bars[5].low, bars[5].close, bars[5].volume, 12.5)
    write_bars(tmp_path / "b.csv", bars)
    assert load_bars(tmp_path / "b.csv") == bars


# --------------------------------------------------------------------------
# news


def _news_file(tmp_path, items):
    p = tmp_path / "n.jsonl"
    p.write_text("".join(json.dumps(i) + "\n" for i in items))
    return p


def _item(ticker, ts, title="t"):
    return {"ticker": ticker, "published_at": ts, "title": title, "body": "", "source": "x"}


def test_news_filtered_by_ticker_and_date(tmp_path):
    items = [_item("AAPL", f"2023-06-01T0{i}:00:00", f"a{i}") for i in range(3)]
    items += [_item("AAPL", "2023-06-02T10:00:00"), _item("aapl", "2023-06-02T11:00:00")]
    items += [_item("MSFT", "2023-06-01T10:00:00")]
    p = _news_file(tmp_path, items)
    got = load_news(p, "AAPL", D(2023, 6, 1))
    assert [i.title for i in got] == ["a0", "a1", "a2"]
    assert len(load_news(p, "aapl", D(2023, 6, 2))) == 2
    assert load_news(p, "AAPL", D(2023, 6, 5)) == []


def test_news_extra_keys_ignored_and_z_suffix(tmp_path):
    p = _news_file(tmp_path, [dict(_item("AAPL", "2023-06-01T13:30:00Z"), sentiment=0.4)])
    (item,) = load_news(p, "AAPL", D(2023, 6, 1))
    assert item.published_at.tzinfo is not None


@pytest.mark.parametrize("line,fragment", [
    ("{not json", "invalid JSON"),
    ('{"ticker": "AAPL", "title": "x"}', "published_at"),
    ('{"ticker": "AAPL", "published_at": "2023-06-01", "title": ""}', "empty title"),
    ('{"ticker": " ", "published_at": "2023-06-01", "title": "x"}', "empty ticker"),
    ('[1, 2]', "object"),
])
def test_malformed_news_reports_line(tmp_path, line, fragment):
    p = tmp_path / "n.jsonl"
    p.write_text(json.dumps(_item("AAPL", "2023-06-01")) + "\n" + line + "\n")
    with pytest.raises(DataError, match=fragment) as err:
        NewsStore.from_file(p)
    assert "line 2" in str(err.value)


def test_unreadable_news_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        NewsStore.from_file(tmp_path / "missing.jsonl")


def test_corpus_sized_like_a_seven_month_window(tmp_path):
    days = business_days(D(2023, 6, 1), D(2023, 12, 29), holidays=US_HOLIDAYS_2023)[:145]
    items = make_news("AAPL", days, seed=11, mean_per_day=4886 / 145)
    while len(items) > 4886:
        items.pop()
    k = 0
    while len(items) < 4886:
        items.append(_item("AAPL", f"{days[k % len(days)].isoformat()}T23:00:00", f"extra {k}"))
        k += 1
    p = tmp_path / "corpus.jsonl"
    write_news(p, items)
    store = NewsStore.from_file(p)
    assert len(store.items) == 4886
    assert sum(len(store.on("AAPL", d)) for d in days) == 4886


# --------------------------------------------------------------------------
# calendar


def test_nyse_2023_second_half_has_147_sessions():
    # The published dataset table counts 145 testing days; the actual NYSE
    # calendar for Jun 1 - Dec 29, 2023 has 147 sessions (checked against
    # numpy's business-day counter with the five holidays in that span).
    days = business_days(D(2023, 6, 1), D(2023, 12, 29), holidays=US_HOLIDAYS_2023)
    bars = flat_bars(business_days(D(2023, 5, 1), D(2024, 1, 31), holidays=US_HOLIDAYS_2023))
    got = trading_days(bars, D(2023, 6, 1), D(2023, 12, 29))
    assert got == days
    oracle = int(np.busday_count("2023-06-01", "2023-12-30",
                                 holidays=[h.isoformat() for h in US_HOLIDAYS_2023]))
    assert len(got) == oracle == 147


def test_trading_days_with_145_session_calendar():
    bars = flat_bars(business_days(D(2023, 6, 1), count=145))
    assert len(trading_days(bars, D(2023, 6, 1), D(2023, 12, 31))) == 145


def test_trading_days_edges():
    bars = flat_bars(business_days(D(2023, 6, 1), count=10))
    d = bars[3].date
    assert trading_days(bars, d, d) == [d]
    assert trading_days(bars, D(2024, 1, 1), D(2024, 2, 1)) == []
    with pytest.raises(ValueError):
        trading_days(bars, D(2023, 7, 1), D(2023, 6, 1))


# --------------------------------------------------------------------------
# indicator oracle: plain loops, written from the textbook definitions


def _oracle(bars, p=IndicatorParams()):
    c = [b.close for b in bars]
    h = [b.high for b in bars]
    lo = [b.low for b in bars]
    n = len(c)
    nan = float("nan")

    def sma(w):
        return [sum(c[i - w + 1:i + 1]) / w if i >= w - 1 else nan for i in range(n)]

    def ema(x, w):
        out = [nan] * n
        idx = [i for i in range(n) if not math.isnan(x[i])]
        if len(idx) < w:
            return out
        s = idx[0] + w - 1
        out[s] = sum(x[idx[0]:s + 1]) / w
        a = 2 / (w + 1)
        for i in range(s + 1, n):
            out[i] = a * x[i] + (1 - a) * out[i - 1]
        return out

    mid = sma(p.bb_window)
    up, dn = [nan] * n, [nan] * n
    for i in range(p.bb_window - 1, n):
        win = c[i - p.bb_window + 1:i + 1]
        sd = math.sqrt(sum((v - mid[i]) ** 2 for v in win) / p.bb_window)
        up[i], dn[i] = mid[i] + p.bb_k * sd, mid[i] - p.bb_k * sd

    rsi = [nan] * n
    ch = [c[i] - c[i - 1] for i in range(1, n)]
    g = sum(max(x, 0) for x in ch[:p.rsi]) / p.rsi
    l_ = sum(max(-x, 0) for x in ch[:p.rsi]) / p.rsi
    for i in range(p.rsi, n):
        if i > p.rsi:
            x = ch[i - 1]
            g = ((p.rsi - 1) * g + max(x, 0)) / p.rsi
            l_ = ((p.rsi - 1) * l_ + max(-x, 0)) / p.rsi
        rsi[i] = 50.0 if g == l_ == 0 else (100.0 if l_ == 0 else 100 - 100 / (1 + g / l_))

    fast, slow = ema(c, p.macd_fast), ema(c, p.macd_slow)
    line = [a - b for a, b in zip(fast, slow)]
    sig = ema(line, p.macd_signal)

    k, d = [nan] * n, [nan] * n
    kp = dp = 50.0
    for i in range(p.kdj_window - 1, n):
        hh, ll = max(h[i - p.kdj_window + 1:i + 1]), min(lo[i - p.kdj_window + 1:i + 1])
        rsv = 50.0 if hh == ll else (c[i] - ll) / (hh - ll) * 100
        kp = (p.kdj_k_smooth - 1) / p.kdj_k_smooth * kp + rsv / p.kdj_k_smooth
        dp = (p.kdj_d_smooth - 1) / p.kdj_d_smooth * dp + kp / p.kdj_d_smooth
        k[i], d[i] = kp, dp
    return {
        "sma10": sma(p.sma_short), "sma50": sma(p.sma_long), "rsi14": rsi,
        "bb_upper": up, "bb_mid": mid, "bb_lower": dn,
        "macd_line": line, "macd_signal": sig, "macd_hist": [a - b for a, b in zip(line, sig)],
        "kdj_k": k, "kdj_d": d, "kdj_j": [3 * a - 2 * b for a, b in zip(k, d)],
    }


def _close(got, want, scale):
    want = np.asarray(want, dtype=float)
    assert np.array_equal(np.isnan(got), np.isnan(want))
    ok = ~np.isnan(want)
    err = np.abs(got[ok] - want[ok])
    assert np.all(err <= 1e-9 * np.maximum(np.abs(want[ok]), scale))


def test_indicators_match_direct_formulas_on_100_random_series():
    for seed in range(100):
        bars = random_bars(200, seed)
        frame = compute_indicators(bars)
        want = _oracle(bars)
        for name in frame.SERIES:
            # oscillators are scaled by 100, price-difference series by price level
            scale = 100.0 if name.startswith(("rsi", "kdj")) else max(b.close for b in bars)
            _close(frame.series(name), want[name], scale)


def test_minimum_history_markers():
    f = compute_indicators(random_bars(60, seed=5))
    first_defined = {name: int(np.argmax(~np.isnan(f.series(name)))) for name in f.SERIES}
    assert first_defined == {
        "sma10": 9, "sma50": 49, "rsi14": 14, "bb_upper": 19, "bb_mid": 19, "bb_lower": 19,
        "macd_line": 25, "macd_signal": 33, "macd_hist": 33, "kdj_k": 8, "kdj_d": 8, "kdj_j": 8,
    }


def test_constant_series_is_a_fixed_point():
    c = 123.456
    f = compute_indicators(flat_bars(business_days(D(2023, 1, 2), count=80), c))
    for name, value in [("sma10", c), ("sma50", c), ("bb_upper", c), ("bb_mid", c), ("bb_lower", c),
                        ("macd_line", 0.0), ("macd_signal", 0.0), ("macd_hist", 0.0), ("rsi14", 50.0)]:
        s = f.series(name)
        assert np.all(s[~np.isnan(s)] == value), name


def test_rising_closes_give_rsi_100():
    days = business_days(D(2023, 1, 2), count=40)
    f = compute_indicators(bars_from_closes(days, [100 + i for i in range(40)], intraday=0.0))
    r = f.rsi14[~np.isnan(f.rsi14)]
    assert len(r) == 26 and np.all(r == 100.0)


def test_short_input_is_all_nan_and_empty_rejected():
    f = compute_indicators(random_bars(5, seed=1))
    assert np.all(np.isnan(f.sma10)) and np.all(np.isnan(f.rsi14))
    with pytest.raises(DataError):
        compute_indicators([])


def test_adjusted_close_switch():
    bars = random_bars(30, seed=2)
    adj = [Bar(b.date, b.open, b.high, b.low, b.close, b.volume, b.close / 2) for b in bars]
    raw = compute_indicators(adj)
    halved = compute_indicators(adj, use_adjusted=True)
    np.testing.assert_allclose(halved.sma10[9:], raw.sma10[9:] / 2, rtol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        IndicatorParams(rsi=0)
    with pytest.raises(ValueError):
        IndicatorParams(macd_fast=26, macd_slow=12)


def test_tail_and_series_lookup():
    f = compute_indicators(random_bars(70, seed=9))
    t = f.tail(60)
    assert len(t) == 60 and t.dates == f.dates[10:]
    np.testing.assert_array_equal(t.sma50, f.sma50[10:])
    with pytest.raises(KeyError):
        f.series("vwap")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.5, 1e4, allow_nan=False), min_size=1, max_size=120), st.integers(0, 99))
def test_indicator_invariants(closes, seed):
    bars = bars_from_closes(business_days(D(2020, 1, 1), count=len(closes)), closes, seed=seed)
    f = compute_indicators(bars)
    assert f.dates == tuple(b.date for b in bars)
    r = f.rsi14[~np.isnan(f.rsi14)]
    assert np.all((r >= 0) & (r <= 100))
    ok = ~np.isnan(f.bb_mid)
    assert np.all(f.bb_lower[ok] <= f.bb_mid[ok]) and np.all(f.bb_mid[ok] <= f.bb_upper[ok])
    ok = ~np.isnan(f.macd_hist)
    assert np.array_equal(f.macd_hist[ok], f.macd_line[ok] - f.macd_signal[ok])
    again = compute_indicators(bars)
    for name in f.SERIES:
        assert f.series(name).tobytes() == again.series(name).tobytes()
