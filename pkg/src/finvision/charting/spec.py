"""Renderer-independent chart descriptions and the two chart builders."""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import ChartError
from ..market_data import Bar, IndicatorFrame

PANEL_KINDS = ("candlestick", "line-set", "histogram")
MARKER_KINDS = ("BUY", "SELL")

TECHNICAL_SIZE = (1200, 900)
SIGNAL_SIZE = (1000, 500)
TECHNICAL_WINDOW = 60
SIGNAL_WINDOW = 30

# candles, volume, RSI, MACD, KDJ
_TECHNICAL_WEIGHTS = (0.45, 0.12, 0.14, 0.15, 0.14)


@dataclass(frozen=True)
class Marker:
    date: dt.date
    kind: str
    price: float


@dataclass(frozen=True)
class Panel:
    kind: str
    height: int
    dates: tuple[dt.date, ...]
    label: str = ""
    series: Mapping[str, tuple[float | None, ...]] = field(default_factory=dict)
    ohlc: tuple[tuple[float, float, float, float], ...] | None = None
    bar_series: str | None = None
    markers: tuple[Marker, ...] = ()
    guides: tuple[float, ...] = ()

    def validate(self) -> None:
        if self.kind not in PANEL_KINDS:
            raise ChartError(f"unknown panel kind {self.kind!r}")
        if self.height <= 0:
            raise ChartError("panel height must be positive")
        n = len(self.dates)
        for name, values in self.series.items():
            if len(values) != n:
                raise ChartError(f"series {name!r} has {len(values)} points for {n} dates")
        if self.kind == "candlestick":
            if self.ohlc is None or len(self.ohlc) != n:
                raise ChartError("candlestick panel needs exactly one OHLC series aligned to its dates")
        elif self.ohlc is not None:
            raise ChartError(f"{self.kind} panel cannot carry OHLC data")
        if self.kind == "histogram" and self.bar_series not in self.series:
            raise ChartError("histogram panel must name one of its series as bar_series")
        axis = set(self.dates)
        for m in self.markers:
            if m.kind not in MARKER_KINDS:
                raise ChartError(f"unknown marker kind {m.kind!r}")
            if m.date not in axis:
                raise ChartError(f"marker date {m.date} is not on the panel's date axis")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "height": self.height,
            "dates": [d.isoformat() for d in self.dates],
            "series": {k: list(v) for k, v in self.series.items()},
            "ohlc": None if self.ohlc is None else [list(x) for x in self.ohlc],
            "bar_series": self.bar_series,
            "markers": [
                {"date": m.date.isoformat(), "kind": m.kind, "price": m.price} for m in self.markers
            ],
            "guides": list(self.guides),
        }


@dataclass(frozen=True)
class ChartSpec:
    title: str
    width: int
    height: int
    panels: tuple[Panel, ...]
    truncated: bool = False

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ChartError(f"chart dimensions must be positive, got {self.width}x{self.height}")
        if not self.panels:
            raise ChartError("chart needs at least one panel")
        if sum(p.height for p in self.panels) != self.height:
            raise ChartError("panel heights must sum to the chart height")
        for p in self.panels:
            p.validate()

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "width": self.width,
            "height": self.height,
            "truncated": self.truncated,
            "panels": [p.to_dict() for p in self.panels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def split_heights(total: int, weights: Sequence[float]) -> list[int]:
    """Integer panel heights proportional to ``weights`` summing to ``total``."""
    raw = [int(math.floor(total * w / sum(weights))) for w in weights]
    raw[0] += total - sum(raw)
    if min(raw) <= 0:
        raise ChartError(f"chart height {total} too small for {len(weights)} panels")
    return raw


def _values(arr: np.ndarray) -> tuple[float | None, ...]:
    return tuple(None if math.isnan(v) else float(v) for v in arr)


def build_technical_chart(
    bars: Sequence[Bar],
    frame: IndicatorFrame,
    *,
    window: int = TECHNICAL_WINDOW,
    size: tuple[int, int] = TECHNICAL_SIZE,
    title: str = "",
) -> ChartSpec:
    """Five-panel candlestick/indicator chart over the last ``window`` bars.

    ``frame`` must cover at least the same trailing dates as ``bars``; only
    the trailing ``window`` entries of either are read. Fewer bars than
    ``window`` produce a chart with ``truncated=True``.
    """
    if not bars:
        raise ChartError("cannot chart an empty bar list")
    bars = list(bars[-window:])
    n = len(bars)
    dates = tuple(b.date for b in bars)
    if len(frame) < n or frame.dates[-n:] != dates:
        raise ChartError("indicator frame is not aligned with the charted bars")
    f = frame.tail(n)
    width, height = size
    h = split_heights(height, _TECHNICAL_WEIGHTS)
    panels = (
        Panel(
            kind="candlestick",
            height=h[0],
            dates=dates,
            label="PRICE SMA10 SMA50 BB(20,2)",
            ohlc=tuple((b.open, b.high, b.low, b.close) for b in bars),
            series={
                "sma10": _values(f.sma10),
                "sma50": _values(f.sma50),
                "bb_upper": _values(f.bb_upper),
                "bb_mid": _values(f.bb_mid),
                "bb_lower": _values(f.bb_lower),
            },
        ),
        Panel(
            kind="histogram",
            height=h[1],
            dates=dates,
            label="VOLUME",
            series={"volume": tuple(float(b.volume) for b in bars)},
            bar_series="volume",
        ),
        Panel(
            kind="line-set",
            height=h[2],
            dates=dates,
            label="RSI(14)",
            series={"rsi14": _values(f.rsi14)},
            guides=(30.0, 70.0),
        ),
        Panel(
            kind="histogram",
            height=h[3],
            dates=dates,
            label="MACD(12,26,9)",
            series={
                "macd_hist": _values(f.macd_hist),
                "macd_line": _values(f.macd_line),
                "macd_signal": _values(f.macd_signal),
            },
            bar_series="macd_hist",
            guides=(0.0,),
        ),
        Panel(
            kind="line-set",
            height=h[4],
            dates=dates,
            label="KDJ(9,3,3)",
            series={"kdj_k": _values(f.kdj_k), "kdj_d": _values(f.kdj_d), "kdj_j": _values(f.kdj_j)},
        ),
    )
    spec = ChartSpec(title=title, width=width, height=height, panels=panels, truncated=n < window)
    spec.validate()
    return spec


def build_signal_chart(
    bars: Sequence[Bar],
    decisions: Iterable[tuple[dt.date, str]],
    *,
    window: int = SIGNAL_WINDOW,
    size: tuple[int, int] = SIGNAL_SIZE,
    title: str = "",
) -> ChartSpec:
    """Closing-price line over the last ``window`` bars with BUY/SELL markers.

    HOLD decisions produce no marker. A decision dated outside the charted
    bars raises :class:`ChartError`.
    """
    if not bars:
        raise ChartError("cannot chart an empty bar list")
    bars = list(bars[-window:])
    dates = tuple(b.date for b in bars)
    close_by_date = {b.date: b.close for b in bars}
    markers = []
    for date, action in decisions:
        action = str(action).upper()
        if date not in close_by_date:
            raise ChartError(f"decision date {date} is outside the charted range {dates[0]}..{dates[-1]}")
        if action == "HOLD":
            continue
        markers.append(Marker(date=date, kind=action, price=close_by_date[date]))
    width, height = size
    panel = Panel(
        kind="line-set",
        height=height,
        dates=dates,
        label="CLOSE",
        series={"close": tuple(b.close for b in bars)},
        markers=tuple(markers),
    )
    spec = ChartSpec(title=title, width=width, height=height, panels=(panel,),
                     truncated=len(bars) < window)
    spec.validate()
    return spec
