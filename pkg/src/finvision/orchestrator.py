"""Agent graph and the day-by-day backtest loop.

For each trading day ``t`` the agents see only data dated ``<= t-1``; the
decision executes at the open of ``t`` and is marked at the close of ``t``.
State is checkpointed after every completed day so a run can resume at the
day that failed.
"""

from __future__ import annotations

import datetime as dt
import graphlib
import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import analytics
from .agents import AgentRole, AgentRunner, RunLogEntry, TradingDecision
from .charting import ChartSpec, build_signal_chart, build_technical_chart, chart_digest, render_png
from .config import RunConfig
from .errors import ConfigError, DataError, GraphCycleError
from .llm_gateway import Backend, make_backend
from .market_data import Bar, NewsItem, NewsStore, compute_indicators, load_bars, trading_days
from .portfolio import (
    Fill,
    Portfolio,
    PortfolioSnapshot,
    daily_reward,
    execute,
    frac_to_str,
    mark_to_market,
    money,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1
NO_NEWS = "No relevant news."
# extra bars fed to the indicators beyond the chart window, for EMA/RSI warm-up
INDICATOR_LOOKBACK = 200

# --------------------------------------------------------------------------
# graph

ANALYSIS_NODES = ("Summarizer", "TechnicalAnalyst", "ReflectionPerformance", "ReflectionVisual")

DEFAULT_EDGES: dict[str, tuple[str, ...]] = {
    # node -> nodes it depends on
    "Summarizer": (),
    "TechnicalAnalyst": (),
    "ReflectionPerformance": (),
    "ReflectionVisual": (),
    "Decision": ANALYSIS_NODES,
    "Execute": ("Decision",),
}


@dataclass(frozen=True)
class ExecutionPlan:
    stages: tuple[frozenset[str], ...]

    @property
    def order(self) -> list[str]:
        return [n for stage in self.stages for n in sorted(stage)]

    def parallel_set(self) -> frozenset[str]:
        return self.stages[0]


def validate_graph(edges: Mapping[str, Sequence[str]] | None = None) -> ExecutionPlan:
    """Topologically order the agent graph into stages of independent nodes."""
    edges = DEFAULT_EDGES if edges is None else edges
    ts = graphlib.TopologicalSorter({k: tuple(v) for k, v in edges.items()})
    try:
        ts.prepare()
    except graphlib.CycleError as exc:
        raise GraphCycleError(f"agent graph has a cycle: {' -> '.join(exc.args[1])}") from None
    stages = []
    while ts.is_active():
        ready = ts.get_ready()
        stages.append(frozenset(ready))
        ts.done(*ready)
    return ExecutionPlan(tuple(stages))


# --------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class DecisionRecord:
    date: dt.date
    phase: str  # warmup | test
    decision: TradingDecision
    fill: Fill | None
    reward: Fraction
    snapshot: PortfolioSnapshot
    cumulative_return: Fraction
    charts: Mapping[str, str] = field(default_factory=dict)

    def reflection_row(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "recommendation": self.decision.action.value,
            "position_size": self.decision.position_size,
            "executed_pct": round(float(self.fill.executed_pct), 2) if self.fill else 0.0,
            "close": money(self.snapshot.price),
            "total_value": money(self.snapshot.total_value),
            "reward": money(self.reward),
            "cumulative_return": round(float(self.cumulative_return) * 100, 2),
        }

    def to_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "phase": self.phase,
            **self.decision.to_dict(),
            "fill": self.fill.to_dict() if self.fill else None,
            "reward": money(self.reward),
            "portfolio": self.snapshot.to_dict(),
            "charts": dict(self.charts),
        }

    def to_state(self) -> dict:
        s = self.snapshot
        return {
            "date": self.date.isoformat(), "phase": self.phase,
            "decision": self.decision.to_dict(),
            "fill": self.fill.to_state() if self.fill else None,
            "reward": frac_to_str(self.reward),
            "snapshot": _snapshot_state(s),
            "cumulative_return": frac_to_str(self.cumulative_return),
            "charts": dict(self.charts),
        }

    @classmethod
    def from_state(cls, d: dict) -> "DecisionRecord":
        return cls(
            date=dt.date.fromisoformat(d["date"]), phase=d["phase"],
            decision=TradingDecision.from_dict(d["decision"]),
            fill=Fill.from_state(d["fill"]) if d["fill"] else None,
            reward=Fraction(d["reward"]), snapshot=_snapshot_from_state(d["snapshot"]),
            cumulative_return=Fraction(d["cumulative_return"]), charts=d.get("charts", {}),
        )


def _snapshot_state(s: PortfolioSnapshot) -> dict:
    return {"date": s.date.isoformat(), "price": frac_to_str(s.price), "cash": frac_to_str(s.cash),
            "shares": frac_to_str(s.shares), "avg_purchase_price": frac_to_str(s.avg_purchase_price),
            "total_value": frac_to_str(s.total_value)}


def _snapshot_from_state(d: dict) -> PortfolioSnapshot:
    return PortfolioSnapshot(
        date=dt.date.fromisoformat(d["date"]), price=Fraction(d["price"]), cash=Fraction(d["cash"]),
        shares=Fraction(d["shares"]),
        avg_purchase_price=None if d["avg_purchase_price"] is None else Fraction(d["avg_purchase_price"]),
        total_value=Fraction(d["total_value"]),
    )


@dataclass
class AgentState:
    """Everything the pipeline accumulates; histories are append-only."""

    ticker: str
    portfolio: Portfolio
    portfolio_snapshot: PortfolioSnapshot | None = None
    date: dt.date | None = None
    news_summary: list[tuple[dt.date, str]] = field(default_factory=list)
    chart_analysis: list[tuple[dt.date, str]] = field(default_factory=list)
    reflection_insights: dict[str, str] = field(default_factory=lambda: {"short": "", "medium": ""})
    market_intelligence: str = ""
    decisions: list[DecisionRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    phase: str = "warmup"

    def event(self, date: dt.date | None, source: str, kind: str, detail: str) -> None:
        self.events.append({"date": date.isoformat() if date else None, "source": source,
                            "kind": kind, "detail": detail})

    def decision_history(self) -> list[tuple[dt.date, str]]:
        return [(r.date, r.decision.action.value) for r in self.decisions]

    def to_state(self) -> dict:
        return {
            "ticker": self.ticker,
            "portfolio": self.portfolio.to_state(),
            "portfolio_snapshot": _snapshot_state(self.portfolio_snapshot) if self.portfolio_snapshot else None,
            "date": self.date.isoformat() if self.date else None,
            "news_summary": [[d.isoformat(), t] for d, t in self.news_summary],
            "chart_analysis": [[d.isoformat(), t] for d, t in self.chart_analysis],
            "reflection_insights": dict(self.reflection_insights),
            "market_intelligence": self.market_intelligence,
            "decisions": [r.to_state() for r in self.decisions],
            "events": list(self.events),
            "phase": self.phase,
        }

    @classmethod
    def from_state(cls, d: dict) -> "AgentState":
        return cls(
            ticker=d["ticker"],
            portfolio=Portfolio.from_state(d["portfolio"]),
            portfolio_snapshot=_snapshot_from_state(d["portfolio_snapshot"]) if d["portfolio_snapshot"] else None,
            date=dt.date.fromisoformat(d["date"]) if d["date"] else None,
            news_summary=[(dt.date.fromisoformat(a), b) for a, b in d["news_summary"]],
            chart_analysis=[(dt.date.fromisoformat(a), b) for a, b in d["chart_analysis"]],
            reflection_insights=dict(d["reflection_insights"]),
            market_intelligence=d["market_intelligence"],
            decisions=[DecisionRecord.from_state(r) for r in d["decisions"]],
            events=list(d["events"]),
            phase=d["phase"],
        )


@dataclass(frozen=True)
class DayContext:
    """Inputs for trading day ``date``: history strictly before it plus today's prices."""

    date: dt.date
    history: tuple[Bar, ...]
    news: tuple[NewsItem, ...]
    execution_price: float
    mark_price: float

    @classmethod
    def build(cls, bars: Sequence[Bar], index: int, news: NewsStore | None, ticker: str,
              lookback_days: int = 1) -> "DayContext":
        today = bars[index]
        history = tuple(bars[:index])
        items: tuple[NewsItem, ...] = ()
        if news is not None and history:
            last = history[-1].date
            first = last - dt.timedelta(days=lookback_days - 1)
            items = tuple(news.between(ticker, first, last))
        return cls(today.date, history, items, today.open, today.close)


def format_news(items: Sequence[NewsItem]) -> str:
    lines = []
    for it in items:
        line = f"[{it.published_at.isoformat()}] {it.title}"
        if it.body:
            line += f": {it.body}"
        if it.source:
            line += f" ({it.source})"
        lines.append(line)
    return "\n".join(lines)


# --------------------------------------------------------------------------
# one day


ChartSink = Callable[[dt.date, str, bytes], None]


def day_charts(history: Sequence[Bar], decisions: Sequence[tuple[dt.date, str]], config: RunConfig,
               ticker: str) -> tuple[ChartSpec, ChartSpec, bytes, bytes]:
    """Technical and signal charts (specs and PNG bytes) shown to the agents.

    ``history`` must end on the bar before the trading day.
    """
    w = config.windows
    frame = compute_indicators(history[-(w.chart + INDICATOR_LOOKBACK):], config.indicators,
                               use_adjusted=config.use_adjusted)
    tech = build_technical_chart(history, frame, window=w.chart, size=config.technical_size,
                                 title=f"{ticker} {history[-1].date.isoformat()}")
    signal_dates = {b.date for b in history[-w.signal:]}
    sig = build_signal_chart(history, [(d, a) for d, a in decisions if d in signal_dates],
                             window=w.signal, size=config.signal_size,
                             title=f"{ticker} SIGNALS {history[-1].date.isoformat()}")
    return tech, sig, render_png(tech), render_png(sig)


def step_day(state: AgentState, ctx: DayContext, runner: AgentRunner, config: RunConfig,
             *, chart_sink: ChartSink | None = None) -> tuple[AgentState, TradingDecision, Fill | None]:
    """Run the agent graph for ``ctx.date`` and execute the resulting decision."""
    if not ctx.history:
        raise DataError(f"{ctx.date}: no market history before this day")
    if state.decisions and state.decisions[-1].date >= ctx.date:
        raise ValueError(f"{ctx.date} is not after the last processed day {state.decisions[-1].date}")
    date_s = ctx.date.isoformat()
    state.date = ctx.date
    w = config.windows
    ticker = state.ticker

    tech, sig, tech_png, sig_png = day_charts(ctx.history, state.decision_history(), config, ticker)
    if tech.truncated:
        state.event(ctx.date, "charting", "TruncatedChart",
                    f"technical chart built from {len(tech.panels[0].dates)} of {w.chart} bars")
    charts = {"technical": chart_digest(tech_png), "signal": chart_digest(sig_png)}
    if chart_sink is not None:
        chart_sink(ctx.date, "technical", tech_png)
        chart_sink(ctx.date, "signal", sig_png)

    short_rows = [r.reflection_row() for r in state.decisions[-w.short:]]
    medium_rows = [r.reflection_row() for r in state.decisions[-w.medium:]]
    if len(state.decisions) < w.medium:
        state.event(ctx.date, "reflection", "PartialHistory",
                    f"{len(state.decisions)} prior decisions (short window {w.short}, medium {w.medium})")

    def summarize() -> str:
        if not ctx.news and not config.summarize_empty_news:
            return NO_NEWS
        news_data = format_news(ctx.news) if ctx.news else NO_NEWS
        return runner.invoke(AgentRole.SUMMARIZER, {"ticker": ticker, "news_data": news_data}, date=date_s)

    def technical() -> str:
        return runner.invoke(AgentRole.TECHNICAL_ANALYST, {"ticker": ticker}, [tech_png], date=date_s)

    def reflect(role: AgentRole, rows: list[dict]) -> str:
        ctx_map = {"ticker": ticker, "len_term_data": len(rows),
                   "json_data": json.dumps(rows, sort_keys=True)}
        return runner.invoke(role, ctx_map, date=date_s)

    def visual() -> str:
        return runner.invoke(AgentRole.REFLECTION_VISUAL, {"ticker": ticker}, [sig_png], date=date_s)

    if not ctx.news:
        state.event(ctx.date, "agents", "NoNews", f"no news for {ticker}; summary set to {NO_NEWS!r}"
                    if not config.summarize_empty_news else f"no news for {ticker}; summarizer given {NO_NEWS!r}")

    log_start = len(runner.run_log)
    tasks = [summarize, technical,
             lambda: reflect(AgentRole.REFLECTION_SHORT, short_rows),
             lambda: reflect(AgentRole.REFLECTION_MEDIUM, medium_rows),
             visual]
    if config.agent_concurrency > 1:
        with ThreadPoolExecutor(max_workers=config.agent_concurrency) as pool:
            futures = [pool.submit(t) for t in tasks]
            x1, x2, x3s, x3m, x4 = (f.result() for f in futures)
    else:
        x1, x2, x3s, x3m, x4 = (t() for t in tasks)

    snap = state.portfolio_snapshot
    assert snap is not None
    decision_ctx = {
        "ticker": ticker,
        "date": date_s,
        **snap.prompt_context(),
        "chart_analysis": x2,
        "news_summary": x1,
        "reflection_short_term": x3s,
        "reflection_medium_term": x3m,
        "market_intelligence": x4,
        "len_historical_data": len(medium_rows),
        "json_data": json.dumps(medium_rows, sort_keys=True),
    }
    decision, parse_events = runner.decide(decision_ctx, date=date_s)
    for e in parse_events:
        state.event(ctx.date, "parser", e.kind, e.detail)
    _order_log(runner, log_start)

    portfolio, fill, rule_events = execute(state.portfolio, decision, ctx.execution_price, ctx.date,
                                           integer_shares=config.integer_shares)
    for e in rule_events:
        state.event(ctx.date, "portfolio", e.kind, e.detail)
    cur = mark_to_market(portfolio, ctx.date, ctx.mark_price)
    reward = daily_reward(snap, cur)
    if config.reward_mode == "percent":
        reward = reward / snap.total_value * 100

    state.news_summary.append((ctx.date, x1))
    state.chart_analysis.append((ctx.date, x2))
    state.reflection_insights = {"short": x3s, "medium": x3m}
    state.market_intelligence = x4
    state.portfolio = portfolio
    state.portfolio_snapshot = cur
    state.decisions.append(DecisionRecord(
        date=ctx.date, phase=state.phase, decision=decision, fill=fill, reward=reward, snapshot=cur,
        cumulative_return=cur.total_value / portfolio.initial_capital - 1, charts=charts,
    ))
    return state, decision, fill


_ROLE_ORDER = {str(r): i for i, r in enumerate(AgentRole)}


def _order_log(runner: AgentRunner, start: int) -> None:
    # concurrent agents append in completion order; make the day's log canonical
    tail = runner.run_log[start:]
    tail.sort(key=lambda e: _ROLE_ORDER.get(e.role, 99))
    runner.run_log[start:] = tail


# --------------------------------------------------------------------------
# whole run


@dataclass
class BacktestReport:
    config: dict
    metrics: dict
    equity: list[dict]
    fills: list[dict]
    events: list[dict]
    decisions: list[dict]
    run_log: list[dict]
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {"config": self.config, "metrics": self.metrics, "equity": self.equity,
                "fills": self.fills, "events": self.events, "schema_version": self.schema_version}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def config_digest(config: RunConfig) -> str:
    return hashlib.sha256(json.dumps(config.to_dict(), sort_keys=True).encode()).hexdigest()


def save_checkpoint(path: Path, config: RunConfig, state: AgentState, runner: AgentRunner,
                    backend: Backend) -> None:
    backend_state = getattr(backend, "checkpoint_state", None)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config_digest": config_digest(config),
        "last_date": state.date.isoformat() if state.date else None,
        "state": state.to_state(),
        "run_log": [e.to_dict() for e in runner.run_log],
        "backend_state": backend_state() if backend_state else None,
    }
    _atomic_write(path, json.dumps(payload, sort_keys=True))


def load_checkpoint(path: Path, config: RunConfig) -> tuple[AgentState, list[RunLogEntry], dict | None]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from None
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')}")
    if payload.get("config_digest") != config_digest(config):
        raise ConfigError("checkpoint was written by a different configuration")
    log = [RunLogEntry(**e) for e in payload["run_log"]]
    return AgentState.from_state(payload["state"]), log, payload.get("backend_state")


def run_backtest(
    config: RunConfig,
    *,
    backend: Backend | None = None,
    bars: Sequence[Bar] | None = None,
    news: NewsStore | None = None,
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
    chart_sink: ChartSink | None = None,
) -> BacktestReport:
    """Warmup days, portfolio reset (memory kept), then test days.

    Metrics and the equity curve cover the test window only; the decision
    log covers both phases.
    """
    validate_graph()
    if bars is None:
        bars = load_bars(config.bars_path)
    if news is None and config.news_path:
        news = NewsStore.from_file(config.news_path)
    if backend is None:
        b = config.backend
        backend = make_backend(b.kind, base_url=b.base_url, script=b.script, cache_dir=b.cache_dir,
                               **({"timeout": b.timeout, "max_retries": b.max_retries,
                                   "max_concurrency": b.max_concurrency} if b.kind != "scripted" else {}))
    bars = list(bars)
    warm = trading_days(bars, config.warmup_start, config.warmup_end)
    test = trading_days(bars, config.test_start, config.test_end)
    if not test:
        raise DataError("no bars inside the test window")
    index = {b.date: i for i, b in enumerate(bars)}
    runner = AgentRunner(backend, config.agents)

    capital = Fraction(config.initial_capital)
    state = AgentState(ticker=config.ticker, portfolio=Portfolio.start(capital))
    ckpt = Path(checkpoint_path) if checkpoint_path else None
    done: dt.date | None = None
    if resume:
        if ckpt is None or not ckpt.exists():
            raise ConfigError("resume requested but no checkpoint file exists")
        state, log, backend_state = load_checkpoint(ckpt, config)
        runner.run_log = log
        restore = getattr(backend, "restore_state", None)
        if backend_state is not None and restore:
            restore(backend_state)
        done = state.date
        logger.info("resuming after %s", done)

    schedule = [(d, "warmup") for d in warm] + [(d, "test") for d in test]
    for day, phase in schedule:
        if done is not None and day <= done:
            continue
        i = index[day]
        if i == 0:
            state.event(day, "orchestrator", "NoHistory", "first bar in file; day skipped")
            continue
        if phase == "test" and state.phase == "warmup":
            state.phase = "test"
            if config.reset_portfolio_at_test:
                state.portfolio = Portfolio.start(capital)
                state.portfolio_snapshot = None
        if state.portfolio_snapshot is None:
            prev = bars[i - 1]
            state.portfolio_snapshot = mark_to_market(state.portfolio, prev.date, prev.close)
        ctx = DayContext.build(bars, i, news, config.ticker, config.news_lookback_days)
        step_day(state, ctx, runner, config, chart_sink=chart_sink)
        if ckpt is not None:
            save_checkpoint(ckpt, config, state, runner, backend)

    return build_report(config, state, runner)


def build_report(config: RunConfig, state: AgentState, runner: AgentRunner) -> BacktestReport:
    test = [r for r in state.decisions if r.phase == "test"]
    curve = analytics.EquityCurve(tuple(r.date for r in test),
                                  tuple(float(r.snapshot.total_value) for r in test))
    metrics: dict = {"n_days": len(curve)}
    if len(curve) >= 2:
        metrics = analytics.metrics(curve, annual_days=config.annual_days,
                                    risk_free=config.risk_free).to_dict()
    if test:
        metrics["final_value"] = money(test[-1].snapshot.total_value)
        metrics["total_reward"] = money(sum((r.reward for r in test), Fraction(0)))
    return BacktestReport(
        config=config.to_dict(),
        metrics=metrics,
        equity=curve.to_list(),
        fills=[dict(r.fill.to_dict(), phase=r.phase) for r in state.decisions if r.fill],
        events=list(state.events),
        decisions=[r.to_dict() for r in state.decisions],
        run_log=[e.to_dict() for e in runner.run_log],
    )


def equity_csv(report: BacktestReport) -> str:
    lines = ["date,total_value"] + [f"{p['date']},{p['total_value']:.2f}" for p in report.equity]
    return "\n".join(lines) + "\n"


def decisions_jsonl(report: BacktestReport) -> str:
    return "".join(json.dumps(d, sort_keys=True) + "\n" for d in report.decisions)


__all__ = [
    "AgentState", "DayContext", "DecisionRecord", "ExecutionPlan", "BacktestReport",
    "validate_graph", "step_day", "day_charts", "run_backtest", "build_report", "save_checkpoint",
    "load_checkpoint", "equity_csv", "decisions_jsonl", "NO_NEWS",
]
