"""Market bars, news items and technical indicators.

Indicator series are numpy float arrays aligned with the input bars. Entries
without enough history are ``NaN``; nothing is ever back-filled with zero.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

logger = logging.getLogger(__name__)

BAR_COLUMNS = ("date", "open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class Bar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: float
    adjusted_close: float | None = None

    def validate(self) -> None:
        for name in ("open", "high", "low", "close"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite price, got {v}")
        if not (math.isfinite(self.volume) and self.volume >= 0):
            raise ValueError(f"volume must be non-negative, got {self.volume}")
        if self.adjusted_close is not None and not self.adjusted_close > 0:
            raise ValueError(f"adjusted_close must be positive, got {self.adjusted_close}")
        if not (self.low <= self.open <= self.high and self.low <= self.close <= self.high):
            raise ValueError(
                f"OHLC violation: open={self.open} high={self.high} "
                f"low={self.low} close={self.close}"
            )


@dataclass(frozen=True)
class NewsItem:
    ticker: str
    published_at: dt.datetime
    title: str
    body: str = ""
    source: str = ""

    @property
    def date(self) -> dt.date:
        return self.published_at.date()


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def _parse_timestamp(text: str) -> dt.datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        return dt.datetime.fromisoformat(text)
    except ValueError:
        return dt.datetime.combine(dt.date.fromisoformat(text), dt.time())


def load_bars(path: str | Path) -> list[Bar]:
    """Read a bars CSV (``date,open,high,low,close,volume[,adjusted_close]``).

    Returns bars sorted by date. Raises :class:`DataError` naming the line
    for malformed rows, OHLC violations and duplicate dates.
    """
    path = Path(path)
    if not path.exists():
        raise DataError("bars file not found", path=str(path))
    bars: list[Bar] = []
    seen: dict[dt.date, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError("empty bars file", path=str(path))
        header = [h.strip().lower() for h in header]
        has_header = header[:1] == ["date"]
        if has_header:
            if tuple(header[:6]) != BAR_COLUMNS or len(header) > 7 or (
                len(header) == 7 and header[6] != "adjusted_close"
            ):
                raise DataError(f"unexpected header {header}", path=str(path), line=1)
            rows: Iterable[tuple[int, list[str]]] = enumerate(reader, start=2)
        else:
            rows = enumerate([header, *reader], start=1)
        for lineno, row in rows:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (6, 7):
                raise DataError(f"expected 6 or 7 fields, got {len(row)}", path=str(path), line=lineno)
            try:
                adj = float(row[6]) if len(row) == 7 and row[6].strip() else None
                bar = Bar(
                    date=_parse_date(row[0]),
                    open=float(row[1]),
                    high=float(row[2]),
                    low=float(row[3]),
                    close=float(row[4]),
                    volume=float(row[5]),
                    adjusted_close=adj,
                )
            except ValueError as exc:
                raise DataError(f"malformed row: {exc}", path=str(path), line=lineno) from None
            try:
                bar.validate()
            except ValueError as exc:
                raise DataError(str(exc), path=str(path), line=lineno) from None
            if bar.date in seen:
                raise DataError(
                    f"duplicate date {bar.date} (first seen on line {seen[bar.date]})",
                    path=str(path),
                    line=lineno,
                )
            seen[bar.date] = lineno
            bars.append(bar)
    if not bars:
        raise DataError("empty bars file", path=str(path))
    bars.sort(key=lambda b: b.date)
    return bars


def write_bars(path: str | Path, bars: Sequence[Bar]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        with_adj = any(b.adjusted_close is not None for b in bars)
        w.writerow(BAR_COLUMNS + (("adjusted_close",) if with_adj else ()))
        for b in bars:
            row = [b.date.isoformat(), *(repr(float(x)) for x in (b.open, b.high, b.low, b.close, b.volume))]
            if with_adj:
                row.append("" if b.adjusted_close is None else repr(float(b.adjusted_close)))
            w.writerow(row)


def _parse_news_line(line: str, lineno: int, path: str) -> NewsItem:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", path=path, line=lineno) from None
    if not isinstance(obj, dict):
        raise DataError("expected a JSON object", path=path, line=lineno)
    try:
        ticker = str(obj["ticker"]).strip().upper()
        published = _parse_timestamp(str(obj["published_at"]))
        title = str(obj["title"]).strip()
    except KeyError as exc:
        raise DataError(f"missing key {exc.args[0]!r}", path=path, line=lineno) from None
    except ValueError as exc:
        raise DataError(f"bad timestamp: {exc}", path=path, line=lineno) from None
    if not ticker:
        raise DataError("empty ticker", path=path, line=lineno)
    if not title:
        raise DataError("empty title", path=path, line=lineno)
    return NewsItem(
        ticker=ticker,
        published_at=published,
        title=title,
        body=str(obj.get("body") or ""),
        source=str(obj.get("source") or ""),
    )


@dataclass
class NewsStore:
    """All news of one file, indexed by (ticker, publication date)."""

    items: list[NewsItem] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._index: dict[tuple[str, dt.date], list[NewsItem]] = defaultdict(list)
        for item in self.items:
            self._index[(item.ticker, item.date)].append(item)

    @classmethod
    def from_file(cls, path: str | Path) -> "NewsStore":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read news file: {exc.strerror}", path=str(path)) from None
        items = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                items.append(_parse_news_line(line, lineno, str(path)))
        return cls(items)

    def on(self, ticker: str, date: dt.date) -> list[NewsItem]:
        return list(self._index.get((ticker.strip().upper(), date), ()))

    def between(self, ticker: str, first: dt.date, last: dt.date) -> list[NewsItem]:
        """Items dated in ``[first, last]`` in file order."""
        ticker = ticker.strip().upper()
        return [i for i in self.items if i.ticker == ticker and first <= i.date <= last]


def load_news(path: str | Path, ticker: str, date: dt.date) -> list[NewsItem]:
    """Items for ``ticker`` published on ``date``, in file order."""
    return NewsStore.from_file(path).on(ticker, date)


def trading_days(bars: Sequence[Bar], start: dt.date, end: dt.date) -> list[dt.date]:
    if start > end:
        raise ValueError(f"start {start} is after end {end}")
    return [b.date for b in bars if start <= b.date <= end]


# --------------------------------------------------------------------------
# indicators


@dataclass(frozen=True)
class IndicatorParams:
    sma_short: int = 10
    sma_long: int = 50
    rsi: int = 14
    bb_window: int = 20
    bb_k: float = 2.0
    macd_fast: int = 12
    macd_slow: int = 26
    macd_signal: int = 9
    kdj_window: int = 9
    kdj_k_smooth: int = 3
    kdj_d_smooth: int = 3

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"indicator parameter {name} must be positive, got {value}")
        if self.macd_fast >= self.macd_slow:
            raise ValueError("macd_fast must be shorter than macd_slow")


@dataclass(frozen=True)
class IndicatorFrame:
    dates: tuple[dt.date, ...]
    sma10: np.ndarray
    sma50: np.ndarray
    rsi14: np.ndarray
    bb_upper: np.ndarray
    bb_mid: np.ndarray
    bb_lower: np.ndarray
    macd_line: np.ndarray
    macd_signal: np.ndarray
    macd_hist: np.ndarray
    kdj_k: np.ndarray
    kdj_d: np.ndarray
    kdj_j: np.ndarray

    SERIES = (
        "sma10", "sma50", "rsi14", "bb_upper", "bb_mid", "bb_lower",
        "macd_line", "macd_signal", "macd_hist", "kdj_k", "kdj_d", "kdj_j",
    )

    def __len__(self) -> int:
        return len(self.dates)

    def series(self, name: str) -> np.ndarray:
        if name not in self.SERIES:
            raise KeyError(name)
        return getattr(self, name)

    def tail(self, n: int) -> "IndicatorFrame":
        n = min(n, len(self.dates))
        start = len(self.dates) - n
        return IndicatorFrame(self.dates[start:], *(getattr(self, s)[start:] for s in self.SERIES))


def _window_mean(x: np.ndarray, n: int) -> np.ndarray:
    out = np.full(x.shape, np.nan)
    if len(x) < n:
        return out
    w = sliding_window_view(x, n)
    # anchor on the first element so constant windows average exactly
    out[n - 1:] = w[:, 0] + (w - w[:, :1]).sum(axis=1) / n
    return out


def _window_pstd(x: np.ndarray, n: int, mean: np.ndarray) -> np.ndarray:
    out = np.full(x.shape, np.nan)
    if len(x) < n:
        return out
    w = sliding_window_view(x, n)
    dev = w - mean[n - 1:, None]
    out[n - 1:] = np.sqrt((dev * dev).sum(axis=1) / n)
    return out


def _ema(x: np.ndarray, n: int) -> np.ndarray:
    """EMA seeded with the simple mean of the first ``n`` defined values.

    Leading NaNs in ``x`` are skipped, so this also works on derived series.
    """
    out = np.full(x.shape, np.nan)
    defined = np.flatnonzero(~np.isnan(x))
    if len(defined) < n:
        return out
    first = defined[0]
    seed_end = first + n - 1
    seed = x[first:seed_end + 1]
    prev = seed[0] + float(np.sum(seed - seed[0])) / n
    out[seed_end] = prev
    alpha = 2.0 / (n + 1)
    for i in range(seed_end + 1, len(x)):
        prev = prev + alpha * (x[i] - prev)
        out[i] = prev
    return out


def _rsi(close: np.ndarray, n: int) -> np.ndarray:
    out = np.full(close.shape, np.nan)
    if len(close) <= n:
        return out
    delta = np.diff(close)
    gains = np.where(delta > 0, delta, 0.0)
    losses = np.where(delta < 0, -delta, 0.0)
    avg_gain = float(np.mean(gains[:n]))
    avg_loss = float(np.mean(losses[:n]))

    def value(g: float, l: float) -> float:
        if l == 0.0:
            return 50.0 if g == 0.0 else 100.0
        return 100.0 * g / (g + l)

    out[n] = value(avg_gain, avg_loss)
    for i in range(n + 1, len(close)):
        avg_gain = (avg_gain * (n - 1) + gains[i - 1]) / n
        avg_loss = (avg_loss * (n - 1) + losses[i - 1]) / n
        out[i] = value(avg_gain, avg_loss)
    return out


def _kdj(high: np.ndarray, low: np.ndarray, close: np.ndarray, window: int,
         k_smooth: int, d_smooth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = np.full(close.shape, np.nan)
    d = np.full(close.shape, np.nan)
    if len(close) < window:
        return k, d, k.copy()
    hh = sliding_window_view(high, window).max(axis=1)
    ll = sliding_window_view(low, window).min(axis=1)
    rng = hh - ll
    rsv = np.where(rng > 0, (close[window - 1:] - ll) / np.where(rng > 0, rng, 1.0) * 100.0, 50.0)
    k_prev = d_prev = 50.0
    for j, r in enumerate(rsv):
        k_prev = k_prev + (r - k_prev) / k_smooth
        d_prev = d_prev + (k_prev - d_prev) / d_smooth
        k[window - 1 + j] = k_prev
        d[window - 1 + j] = d_prev
    return k, d, 3.0 * k - 2.0 * d


def compute_indicators(bars: Sequence[Bar], params: IndicatorParams | None = None,
                       *, use_adjusted: bool = False) -> IndicatorFrame:
    """Compute every indicator series over ``bars`` (sorted, non-empty).

    With ``use_adjusted`` the adjusted close replaces the close where present;
    highs and lows are left raw.
    """
    if not bars:
        raise DataError("compute_indicators needs at least one bar")
    params = params or IndicatorParams()
    dates = tuple(b.date for b in bars)
    if any(a >= b for a, b in zip(dates, dates[1:])):
        raise DataError("bars must be strictly increasing in date")
    if use_adjusted:
        close = np.array([b.adjusted_close if b.adjusted_close is not None else b.close for b in bars])
    else:
        close = np.array([b.close for b in bars], dtype=float)
    high = np.array([b.high for b in bars], dtype=float)
    low = np.array([b.low for b in bars], dtype=float)

    mid = _window_mean(close, params.bb_window)
    width = params.bb_k * _window_pstd(close, params.bb_window, mid)
    ema_fast = _ema(close, params.macd_fast)
    ema_slow = _ema(close, params.macd_slow)
    macd_line = ema_fast - ema_slow
    macd_signal = _ema(macd_line, params.macd_signal)
    k, d, j = _kdj(high, low, close, params.kdj_window, params.kdj_k_smooth, params.kdj_d_smooth)
    return IndicatorFrame(
        dates=dates,
        sma10=_window_mean(close, params.sma_short),
        sma50=_window_mean(close, params.sma_long),
        rsi14=_rsi(close, params.rsi),
        bb_upper=mid + width,
        bb_mid=mid,
        bb_lower=mid - width,
        macd_line=macd_line,
        macd_signal=macd_signal,
        macd_hist=macd_line - macd_signal,
        kdj_k=k,
        kdj_d=d,
        kdj_j=j,
    )
