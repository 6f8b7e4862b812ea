"""Deterministic synthetic market data, news and decision scripts.

Used to build reproducible fixtures and demos without network access or
proprietary data.
"""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agents.parsing import TradingDecision, format_decision
from .market_data import Bar

# NYSE full-day closures in 2023
US_HOLIDAYS_2023 = frozenset({
    dt.date(2023, 1, 2), dt.date(2023, 1, 16), dt.date(2023, 2, 20), dt.date(2023, 4, 7),
    dt.date(2023, 5, 29), dt.date(2023, 6, 19), dt.date(2023, 7, 4), dt.date(2023, 9, 4),
    dt.date(2023, 11, 23), dt.date(2023, 12, 25),
})

ROLE_MATCH = {
    "summarizer": "Analyze the following financial news about",
    "technical": "candlestick chart focusing on three trading strategies",
    "reflection": "stock trading data:",
    "visual": "trading chart showing closing prices and previous trading signals",
    "decision": "As an advanced trading strategy agent",
}


def business_days(start: dt.date, end: dt.date | None = None, *, count: int | None = None,
                  holidays: Iterable[dt.date] = ()) -> list[dt.date]:
    """Weekdays from ``start`` that are not holidays, up to ``end`` or ``count`` days."""
    if (end is None) == (count is None):
        raise ValueError("give exactly one of end or count")
    hol = set(holidays)
    out: list[dt.date] = []
    d = start
    while (end is None or d <= end) and (count is None or len(out) < count):
        if d.weekday() < 5 and d not in hol:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def bars_from_closes(dates: Sequence[dt.date], closes: Sequence[float], *, seed: int = 0,
                     intraday: float = 0.005, volume: float = 1_000_000.0) -> list[Bar]:
    """Bars with the given closes and random but consistent open/high/low."""
    rng = np.random.default_rng(seed)
    bars = []
    prev = closes[0]
    for d, c in zip(dates, closes):
        o = float(prev * (1 + rng.normal(0, intraday / 2)))
        hi = max(o, c) * (1 + abs(rng.normal(0, intraday)))
        lo = min(o, c) * (1 - abs(rng.normal(0, intraday)))
        v = float(round(volume * (0.5 + rng.random())))
        bars.append(Bar(d, round(o, 4), round(float(hi), 4), round(float(lo), 4), round(float(c), 4), v))
        prev = c
    return bars


def random_walk_bars(dates: Sequence[dt.date], *, seed: int = 0, start: float = 100.0,
                     drift: float = 0.0005, vol: float = 0.015) -> list[Bar]:
    rng = np.random.default_rng(seed)
    closes = start * np.exp(np.cumsum(rng.normal(drift, vol, len(dates))))
    return bars_from_closes(dates, closes, seed=seed + 1)


def flat_bars(dates: Sequence[dt.date], price: float = 100.0) -> list[Bar]:
    return [Bar(d, price, price, price, price, 1_000_000.0) for d in dates]


def make_news(ticker: str, dates: Sequence[dt.date], *, seed: int = 0, mean_per_day: float = 3.0,
              skip_every: int = 0) -> list[dict]:
    """JSON-ready news objects; every ``skip_every``-th date gets no news."""
    rng = np.random.default_rng(seed)
    out = []
    for k, d in enumerate(dates):
        if skip_every and k % skip_every == skip_every - 1:
            continue
        for j in range(int(rng.poisson(mean_per_day))):
            ts = dt.datetime.combine(d, dt.time(9 + j % 8, (7 * j) % 60))
            out.append({
                "ticker": ticker,
                "published_at": ts.isoformat(),
                "title": f"{ticker} headline {d.isoformat()} #{j + 1}",
                "body": f"Synthetic article {j + 1} about {ticker} on {d.isoformat()}.",
                "source": "synthetic",
            })
    return out


def write_news(path: str | Path, items: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for it in items:
            fh.write(json.dumps(it, sort_keys=True) + "\n")


def day_script(day_label: str, decision: TradingDecision | str, *, news: bool = True) -> list[dict]:
    """Script entries for one trading day, one per role, each tagged with a match.

    Without ``news`` the summarizer entry is left out, as the pipeline skips
    that call on days with nothing to summarize.
    """
    text = decision if isinstance(decision, str) else format_decision(decision)
    summary = [{"match": ROLE_MATCH["summarizer"], "response": f"Summary {day_label}: neutral news flow."}]
    return summary * news + [
        {"match": ROLE_MATCH["technical"],
         "response": f"Strategy 1: sideways {day_label} | hold\nStrategy 2: neutral | wait"},
        {"match": ROLE_MATCH["reflection"], "response": "Mixed | price trend | flat"},
        {"match": ROLE_MATCH["reflection"], "response": "Mixed | price trend | flat"},
        {"match": ROLE_MATCH["visual"], "response": f"- {day_label}: no strong pattern"},
        {"match": ROLE_MATCH["decision"], "response": text},
    ]


def write_script(path: str | Path, decisions: Sequence[TradingDecision | str], *,
                 quiet_days: Iterable[int] = ()) -> None:
    """One day of entries per decision; ``quiet_days`` are 0-based days without news."""
    quiet = set(quiet_days)
    with Path(path).open("w", encoding="utf-8") as fh:
        for k, dec in enumerate(decisions):
            for entry in day_script(f"day{k + 1}", dec, news=k not in quiet):
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def cycle_decisions(n: int, pattern: Sequence[tuple[str, int]]) -> list[TradingDecision]:
    """``n`` decisions repeating ``pattern`` of (action, size)."""
    out = []
    for k in range(n):
        action, size = pattern[k % len(pattern)]
        out.append(TradingDecision(action, size, f"Scripted {action.lower()} #{k + 1}."))
    return out


# A decision sequence that touches every execution rule: selling with no
# position, repeated full-size buys until the cash reserve clamps and then
# blocks, capped sells, and malformed or out-of-range replies.
FIXTURE_PATTERN: tuple[TradingDecision | str, ...] = (
    TradingDecision("SELL", 3, "Nothing held yet."),
    TradingDecision("BUY", 10, "Momentum building."),
    TradingDecision("BUY", 10, "Adding on strength."),
    TradingDecision("HOLD", 0, "Waiting for confirmation."),
    TradingDecision("BUY", 8, "Breakout above resistance."),
    "The outlook is unclear, so no firm call today.",
    TradingDecision("SELL", 4, "Taking partial profit."),
    "Recommendation: BUY\nPosition Size: 15%\nExplanation: Oversized request.",
    TradingDecision("BUY", 10, "Trend intact."),
    TradingDecision("BUY", 10, "Still trending."),
    TradingDecision("BUY", 10, "Reserve should bind now."),
    TradingDecision("SELL", 10, "Risk off."),
    TradingDecision("SELL", 10, "Further reduction."),
    TradingDecision("HOLD", 0, "Flat tape."),
)

FIXTURE_LAYOUT = {"history": 60, "warmup": 42, "test": 30}


def write_fixture(directory: str | Path, *, ticker: str = "SYNT", seed: int = 7,
                  start: dt.date = dt.date(2023, 1, 3)) -> dict:
    """Write bars.csv, news.jsonl, script.jsonl and config.json into ``directory``.

    The bars cover pre-history, warmup and test days back to back on a plain
    business-day calendar. Returns the config dictionary written.
    """
    from .market_data import write_bars

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    n_hist, n_warm, n_test = (FIXTURE_LAYOUT[k] for k in ("history", "warmup", "test"))
    days = business_days(start, count=n_hist + n_warm + n_test)
    write_bars(out / "bars.csv", random_walk_bars(days, seed=seed))
    news = make_news(ticker, days, seed=seed + 1, mean_per_day=2.0, skip_every=6)
    write_news(out / "news.jsonl", news)
    news_dates = {dt.date.fromisoformat(n["published_at"][:10]) for n in news}
    traded = days[n_hist:]
    quiet = [k for k, d in enumerate(traded) if days[days.index(d) - 1] not in news_dates]
    decisions = [FIXTURE_PATTERN[k % len(FIXTURE_PATTERN)] for k in range(len(traded))]
    write_script(out / "script.jsonl", decisions, quiet_days=quiet)
    config = {
        "ticker": ticker,
        "bars_path": "bars.csv",
        "news_path": "news.jsonl",
        "warmup_start": days[n_hist].isoformat(),
        "warmup_end": days[n_hist + n_warm - 1].isoformat(),
        "test_start": days[n_hist + n_warm].isoformat(),
        "test_end": days[-1].isoformat(),
        "initial_capital": 100000.0,
        "backend": {"kind": "scripted", "script": "script.jsonl"},
        "technical_size": [600, 450],
        "signal_size": [500, 250],
        "output_dir": "out",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config
