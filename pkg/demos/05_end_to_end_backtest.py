"""A complete scripted backtest: warmup, portfolio reset, test window.

Writes the bundled synthetic fixture into a scratch directory, runs the
agent pipeline against the scripted backend (no network), and compares the
result with the three rule-based baselines.

    python demos/05_end_to_end_backtest.py [work_dir]
"""

import sys
from collections import Counter
from pathlib import Path

from finvision.cli import baseline_report, summary_table
from finvision.config import RunConfig
from finvision.market_data import load_bars
from finvision.orchestrator import run_backtest
from finvision.synthetic import write_fixture

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out/e2e")
write_fixture(work)
config = RunConfig.load(work / "config.json")
print(f"{config.ticker}: warmup {config.warmup_start}..{config.warmup_end}, "
      f"test {config.test_start}..{config.test_end}")

report = run_backtest(config)
print(f"{len(report.decisions)} decisions, {len(report.fills)} fills, {len(report.run_log)} agent calls")
print("decisions by action:", dict(Counter(d["action"] for d in report.decisions)))
print("rule and parser events:", dict(Counter(e["kind"] for e in report.events)))

bars = load_bars(config.bars_path)
rows = [("FinVision (scripted)", report.metrics)]
rows += [(name, baseline_report(config, bars, name).metrics) for name in ("bh", "macd", "kdj-rsi")]
print()
print(summary_table(rows), end="")
