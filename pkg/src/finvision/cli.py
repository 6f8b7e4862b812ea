"""Command-line entry point.

Output layout of ``run`` and ``baseline`` (one flat directory)::

    report.json            config, metrics, equity, fills, events, schema_version
    equity.csv             date,total_value over the test window
    fills.csv              one row per executed trade
    decisions.jsonl        one JSON object per decision (or baseline signal)
    summary.md             ARR% / SR% / MDD% table
    config.resolved.json   every effective setting, re-runnable as --config
    runlog.jsonl           every agent call (run only)
    checkpoint.json        resume state (run only)
    charts/<date>_technical.png, charts/<date>_signal.png   (run only)

Exit codes: 0 success, 2 configuration error, 3 data error, 4 gateway error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__, analytics
from .config import RunConfig, apply_overrides
from .errors import AgentError, ChartError, ConfigError, DataError, GatewayError
from .llm_gateway import cache_clear, cache_stats
from .market_data import Bar, load_bars
from .orchestrator import (SCHEMA_VERSION, BacktestReport, day_charts, decisions_jsonl,
                           equity_csv, run_backtest)

logger = logging.getLogger("finvision")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_GATEWAY = 0, 2, 3, 4
DEFAULT_OUTPUT = "finvision-out"
DEFAULT_CACHE = Path.home() / ".cache" / "finvision"


class CliConfig:
    """A :class:`RunConfig` plus the settings that only the CLI cares about."""

    def __init__(self, run: RunConfig, output_dir: Path, log_level: str = "INFO"):
        self.run = run
        self.output_dir = output_dir
        self.log_level = log_level

    @classmethod
    def load(cls, path: str | Path, *, output: str | None = None,
             overrides: dict[str, Any] | None = None) -> "CliConfig":
        path = Path(path)
        run = RunConfig.load(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        if overrides:
            run = apply_overrides(run, overrides)
        if output:
            out = Path(output)
        elif raw.get("output_dir"):
            out = Path(raw["output_dir"])
            out = out if out.is_absolute() else path.parent / out
        else:
            out = Path(DEFAULT_OUTPUT)
        level = str(raw.get("log_level", "INFO")).upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ConfigError(f"unknown log_level {level!r}")
        return cls(run, out, level)

    def resolved(self) -> dict:
        d = self.run.to_dict()
        d["output_dir"] = str(self.output_dir.resolve())
        d["log_level"] = self.log_level
        return d


def _parse_override(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return key.strip(), value


def _prepare_output(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{x * 100:.2f}"


def summary_table(rows: Sequence[tuple[str, dict]]) -> str:
    lines = ["| Strategy | ARR% | SR% | MDD% |", "|---|---:|---:|---:|"]
    for name, m in rows:
        sr = m.get("sharpe_annualized")
        lines.append(f"| {name} | {_pct(m.get('arr'))} | {'n/a' if sr is None else f'{sr:.2f}'} "
                     f"| {_pct(m.get('mdd'))} |")
    return "\n".join(lines) + "\n"


def _fills_csv(fills: Sequence[dict]) -> str:
    buf = io.StringIO()
    header = ["date", "action", "shares", "price", "requested_pct", "executed_pct",
              "cash_after", "shares_after"]
    w = csv.DictWriter(buf, fieldnames=header, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(fills)
    return buf.getvalue()


def write_report(out: Path, report: BacktestReport, cfg: CliConfig, name: str) -> None:
    _write(out / "report.json", report.to_json())
    _write(out / "equity.csv", equity_csv(report))
    _write(out / "fills.csv", _fills_csv(report.fills))
    _write(out / "decisions.jsonl", decisions_jsonl(report))
    _write(out / "summary.md", summary_table([(name, report.metrics)]))
    _write(out / "config.resolved.json", json.dumps(cfg.resolved(), sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# commands


def _load(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig.load(args.config, output=args.output, overrides=dict(getattr(args, "overrides", [])))
    if not args.verbose:
        logger.setLevel(cfg.log_level)
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = cfg.output_dir
    _prepare_output(out)
    charts = out / "charts"
    charts.mkdir(exist_ok=True)

    def sink(date: dt.date, kind: str, png: bytes) -> None:
        (charts / f"{date.isoformat()}_{kind}.png").write_bytes(png)

    ckpt = out / "checkpoint.json"
    try:
        report = run_backtest(cfg.run, checkpoint_path=ckpt, resume=args.resume, chart_sink=sink)
    except (GatewayError, AgentError) as exc:
        logger.error("gateway failure: %s", exc)
        if ckpt.exists():
            logger.error("checkpoint kept at %s; re-run with --resume", ckpt)
        return EXIT_GATEWAY
    write_report(out, report, cfg, "FinVision")
    _write(out / "runlog.jsonl", "".join(json.dumps(e, sort_keys=True) + "\n" for e in report.run_log))
    print(summary_table([("FinVision", report.metrics)]), end="")
    return EXIT_OK


def baseline_report(run: RunConfig, bars: Sequence[Bar], strategy: str) -> BacktestReport:
    fn = analytics.BASELINES[strategy]
    kwargs = {} if strategy == "bh" else {"params": run.indicators}
    try:
        res = fn(bars, run.initial_capital, run.test_start, run.test_end, **kwargs)
    except ValueError as exc:
        raise DataError(f"{run.bars_path}: {exc}") from None
    curve = res.curve
    metrics: dict = {"n_days": len(curve)}
    if len(curve) >= 2:
        metrics = analytics.metrics(curve, annual_days=run.annual_days, risk_free=run.risk_free).to_dict()
    metrics["final_value"] = round(curve.values[-1], 2)
    fills = [{"date": t.date.isoformat(), "action": t.action, "shares": round(t.shares, 6),
              "price": round(t.price, 2), "requested_pct": 100, "executed_pct": 100.0,
              "cash_after": round(t.cash_after, 2), "shares_after": round(t.shares_after, 6),
              "signal_date": t.signal_date.isoformat()} for t in res.trades]
    decisions = [{"date": d.isoformat(), "action": a, "strategy": strategy} for d, a in res.signals]
    return BacktestReport(config=run.to_dict(), metrics=metrics, equity=curve.to_list(), fills=fills,
                          events=[], decisions=decisions, run_log=[], schema_version=SCHEMA_VERSION)


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _load(args)
    bars = load_bars(cfg.run.bars_path)
    report = baseline_report(cfg.run, bars, args.strategy)
    out = cfg.output_dir
    _prepare_output(out)
    write_report(out, report, cfg, args.strategy)
    print(summary_table([(args.strategy, report.metrics)]), end="")
    return EXIT_OK


def _nearest(dates: Sequence[dt.date], day: dt.date) -> str:
    before = [d for d in dates if d < day]
    after = [d for d in dates if d > day]
    parts = []
    if before:
        parts.append(f"previous {before[-1].isoformat()}")
    if after:
        parts.append(f"next {after[0].isoformat()}")
    return ", ".join(parts) or "none"


def _load_decisions(path: Path, before: dt.date) -> list[tuple[dt.date, str]]:
    if not path.exists():
        return []
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            day = dt.date.fromisoformat(d["date"])
            if day < before:
                out.append((day, d["action"]))
    return out


def cmd_render(args: argparse.Namespace) -> int:
    cfg = _load(args)
    try:
        day = dt.date.fromisoformat(args.date)
    except ValueError:
        raise ConfigError(f"--date must be YYYY-MM-DD, got {args.date!r}") from None
    bars = load_bars(cfg.run.bars_path)
    dates = [b.date for b in bars]
    if day not in dates:
        raise DataError(f"{day} is not a trading day in {cfg.run.bars_path}; nearest: {_nearest(dates, day)}")
    i = dates.index(day)
    if i == 0:
        raise DataError(f"{day} is the first bar; there is no history to chart")
    dec_path = Path(args.decisions) if args.decisions else cfg.output_dir / "decisions.jsonl"
    decisions = _load_decisions(dec_path, day)
    tech, _, tech_png, sig_png = day_charts(bars[:i], decisions, cfg.run, cfg.run.ticker)
    if tech.truncated:
        logger.warning("only %d bars of history before %s; chart truncated",
                       len(tech.panels[0].dates), day)
    out = cfg.output_dir
    _prepare_output(out)
    for kind, png in (("technical", tech_png), ("signal", sig_png)):
        p = out / f"{kind}_{day.isoformat()}.png"
        p.write_bytes(png)
        print(p)
    return EXIT_OK


def _cache_dir(args: argparse.Namespace) -> Path:
    if args.cache_dir:
        return Path(args.cache_dir)
    if args.config:
        c = RunConfig.load(args.config)
        if c.backend.cache_dir:
            return Path(c.backend.cache_dir)
    env = os.environ.get("FINVISION_CACHE_DIR")
    return Path(env) if env else DEFAULT_CACHE


def cmd_cache(args: argparse.Namespace) -> int:
    d = _cache_dir(args)
    if args.action == "clear":
        cache_clear(d)
    print(cache_stats(d))
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finvision", description="Multi-agent multimodal trading backtester.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, overrides: bool = True) -> None:
        sp.add_argument("--config", required=True, help="run configuration JSON")
        sp.add_argument("--output", help="output directory (default: output_dir from config)")
        if overrides:
            sp.add_argument("--set", dest="overrides", action="append", default=[], type=_override_arg,
                            metavar="KEY=VALUE", help="override a config field, e.g. backend.kind=scripted")

    r = sub.add_parser("run", help="run the agent backtest")
    common(r)
    r.add_argument("--resume", action="store_true", help="continue from the output's checkpoint")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("baseline", help="run a rule-based baseline")
    common(b)
    b.add_argument("--strategy", required=True, choices=sorted(analytics.BASELINES))
    b.set_defaults(func=cmd_baseline)

    rd = sub.add_parser("render", help="render the charts the agents see on a date")
    common(rd, overrides=False)
    rd.add_argument("--date", required=True, help="trading day, YYYY-MM-DD")
    rd.add_argument("--decisions", help="decisions.jsonl for signal markers (default: from output dir)")
    rd.set_defaults(func=cmd_render)

    c = sub.add_parser("cache", help="inspect or clear the response cache")
    c.add_argument("action", choices=["stats", "clear"])
    c.add_argument("--cache-dir", help="cache directory")
    c.add_argument("--config", help="take the cache directory from this config")
    c.set_defaults(func=cmd_cache)
    return p


def _override_arg(text: str) -> tuple[str, Any]:
    try:
        return _parse_override(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * args.verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"finvision: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ChartError) as exc:
        print(f"finvision: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GatewayError, AgentError) as exc:
        print(f"finvision: gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
