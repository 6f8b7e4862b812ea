"""Evaluation metrics and rule-based baseline strategies.

Baselines trade all-in/all-out with fractional shares at the next bar's open
after a signal, so no signal uses a price it could not have seen.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .market_data import Bar, IndicatorParams, compute_indicators


class CurveTooShort(ValueError):
    pass


class UndefinedSharpe(ValueError):
    """Return variance is zero, so the Sharpe ratio is undefined."""


@dataclass(frozen=True)
class EquityCurve:
    dates: tuple[dt.date, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.values):
            raise ValueError("dates and values differ in length")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("equity curve dates must be strictly increasing")
        if any(not (v > 0 and math.isfinite(v)) for v in self.values):
            raise ValueError("equity curve values must be positive")

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values: Sequence[float], start: dt.date = dt.date(2000, 1, 3)) -> "EquityCurve":
        return cls(tuple(start + dt.timedelta(days=i) for i in range(len(values))),
                   tuple(float(v) for v in values))

    def to_list(self) -> list[dict]:
        return [{"date": d.isoformat(), "total_value": round(v, 2)} for d, v in zip(self.dates, self.values)]


@dataclass(frozen=True)
class MetricsReport:
    arr: float
    sharpe_annualized: float | None
    sharpe_daily: float | None
    mdd: float
    n_days: int

    def to_dict(self) -> dict:
        return {"arr": self.arr, "sharpe_annualized": self.sharpe_annualized,
                "sharpe_daily": self.sharpe_daily, "mdd": self.mdd, "n_days": self.n_days}


def _values(curve: EquityCurve | Sequence[float]) -> np.ndarray:
    return np.asarray(curve.values if isinstance(curve, EquityCurve) else curve, dtype=float)


def arr(curve: EquityCurve | Sequence[float], annual_days: int = 252) -> float:
    """Simple (non-compounded) annualized return: total return x C / T.

    T counts return intervals, i.e. ``len(curve) - 1``.
    """
    v = _values(curve)
    if len(v) < 2:
        raise CurveTooShort("ARR needs at least two curve points")
    return float((v[-1] - v[0]) / v[0] * annual_days / (len(v) - 1))


def daily_returns(curve: EquityCurve | Sequence[float]) -> np.ndarray:
    v = _values(curve)
    return v[1:] / v[:-1] - 1.0


def sharpe(curve: EquityCurve | Sequence[float], risk_free: float = 0.0,
           annualization: float = math.sqrt(252)) -> float:
    """Mean excess daily return over its sample standard deviation, scaled.

    Pass ``annualization=1`` for the raw daily figure.
    """
    v = _values(curve)
    if len(v) < 3:
        raise CurveTooShort("Sharpe needs at least three curve points")
    r = daily_returns(v)
    sd = float(np.std(r, ddof=1))
    # a spread at rounding-noise level means the returns are constant
    if not math.isfinite(sd) or sd <= 1e-12 * max(1.0, float(np.max(np.abs(r)))):
        raise UndefinedSharpe("zero return variance")
    return float((np.mean(r) - risk_free) / sd * annualization)


def mdd(curve: EquityCurve | Sequence[float]) -> float:
    """Largest drop from a running peak, as a fraction.

    Drawdown is scale-free, so raw values are used rather than cumulative
    returns; that avoids one rounding step.
    """
    v = _values(curve)
    if len(v) < 1:
        raise CurveTooShort("MDD needs at least one curve point")
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak))


def metrics(curve: EquityCurve, *, annual_days: int = 252, risk_free: float = 0.0) -> MetricsReport:
    try:
        sa = sharpe(curve, risk_free, math.sqrt(annual_days))
        sd = sharpe(curve, risk_free, 1.0)
    except (UndefinedSharpe, CurveTooShort):
        sa = sd = None
    return MetricsReport(arr=arr(curve, annual_days), sharpe_annualized=sa, sharpe_daily=sd,
                         mdd=mdd(curve), n_days=len(curve))


# --------------------------------------------------------------------------
# baselines


@dataclass(frozen=True)
class BaselineTrade:
    date: dt.date
    action: str  # BUY | SELL
    shares: float
    price: float
    signal_date: dt.date
    cash_after: float
    shares_after: float


@dataclass
class BaselineRun:
    name: str
    curve: EquityCurve
    trades: list[BaselineTrade] = field(default_factory=list)
    signals: list[tuple[dt.date, str]] = field(default_factory=list)


def _window(bars: Sequence[Bar], start: dt.date | None, end: dt.date | None) -> tuple[int, int]:
    idx = [i for i, b in enumerate(bars) if (start is None or b.date >= start) and (end is None or b.date <= end)]
    if not idx:
        raise ValueError("no bars in the evaluation window")
    return idx[0], idx[-1]


def baseline_buy_hold(bars: Sequence[Bar], capital: float, start: dt.date | None = None,
                      end: dt.date | None = None) -> BaselineRun:
    """Invest everything at the first window open; mark at each close."""
    i0, i1 = _window(bars, start, end)
    entry = bars[i0].open
    shares = capital / entry
    window = bars[i0:i1 + 1]
    curve = EquityCurve(tuple(b.date for b in window), tuple(capital * b.close / entry for b in window))
    trade = BaselineTrade(bars[i0].date, "BUY", shares, entry, bars[i0].date, 0.0, shares)
    return BaselineRun("bh", curve, [trade], [(bars[i0].date, "BUY")])


def crossings(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """+1 where ``a`` crosses above ``b`` at index i, -1 where below, else 0.

    A cross needs both points defined: (a-b) goes from <= 0 to > 0 (up) or
    from >= 0 to < 0 (down).
    """
    diff = a - b
    out = np.zeros(len(diff), dtype=int)
    prev, cur = diff[:-1], diff[1:]
    ok = ~(np.isnan(prev) | np.isnan(cur))
    out[1:][ok & (prev <= 0) & (cur > 0)] = 1
    out[1:][ok & (prev >= 0) & (cur < 0)] = -1
    return out


def _run_signals(name: str, bars: Sequence[Bar], signal: np.ndarray, capital: float,
                 i0: int, i1: int) -> BaselineRun:
    """All-in on +1, all-out on -1; a signal at close of day i fills at open i+1.

    Signals from the bar before the window may fill on its first day.
    """
    cash, shares = float(capital), 0.0
    dates, values, trades, signals = [], [], [], []
    for i in range(i0, i1 + 1):
        s = signal[i - 1] if i - 1 >= 0 else 0
        bar = bars[i]
        if s == 1 and shares == 0.0:
            shares, cash = cash / bar.open, 0.0
            trades.append(BaselineTrade(bar.date, "BUY", shares, bar.open, bars[i - 1].date, cash, shares))
        elif s == -1 and shares > 0.0:
            sold = shares
            cash, shares = shares * bar.open, 0.0
            trades.append(BaselineTrade(bar.date, "SELL", sold, bar.open, bars[i - 1].date, cash, shares))
        dates.append(bar.date)
        values.append(cash + shares * bar.close)
        if signal[i] != 0 and i < i1:
            signals.append((bars[i].date, "BUY" if signal[i] > 0 else "SELL"))
    return BaselineRun(name, EquityCurve(tuple(dates), tuple(values)), trades, signals)


def macd_signals(bars: Sequence[Bar], params: IndicatorParams | None = None) -> np.ndarray:
    f = compute_indicators(bars, params)
    return crossings(f.macd_line, f.macd_signal)


def kdj_rsi_signals(bars: Sequence[Bar], params: IndicatorParams | None = None,
                    overbought: float = 70.0, oversold: float = 30.0) -> np.ndarray:
    """K/D crossings filtered by RSI: buys need RSI < 70, sells RSI > 30."""
    f = compute_indicators(bars, params)
    cross = crossings(f.kdj_k, f.kdj_d)
    rsi = f.rsi14
    with np.errstate(invalid="ignore"):
        buy = (cross == 1) & (rsi < overbought)
        sell = (cross == -1) & (rsi > oversold)
    return np.where(buy, 1, np.where(sell, -1, 0))


def baseline_macd(bars: Sequence[Bar], capital: float, start: dt.date | None = None,
                  end: dt.date | None = None, params: IndicatorParams | None = None) -> BaselineRun:
    i0, i1 = _window(bars, start, end)
    return _run_signals("macd", bars, macd_signals(bars[:i1 + 1], params), capital, i0, i1)


def baseline_kdj_rsi(bars: Sequence[Bar], capital: float, start: dt.date | None = None,
                     end: dt.date | None = None, params: IndicatorParams | None = None) -> BaselineRun:
    i0, i1 = _window(bars, start, end)
    return _run_signals("kdj-rsi", bars, kdj_rsi_signals(bars[:i1 + 1], params), capital, i0, i1)


BASELINES = {"bh": baseline_buy_hold, "macd": baseline_macd, "kdj-rsi": baseline_kdj_rsi}
