"""Indicators and the two chart images the agents look at.

Builds 160 synthetic trading days, computes the indicator frame, prints the
last row, and writes the technical and signal charts as PNG files.

    python demos/01_indicators_and_charts.py [output_dir]
"""

import datetime as dt
import sys
from pathlib import Path

from finvision.charting import build_signal_chart, build_technical_chart, chart_digest, render_png
from finvision.market_data import compute_indicators
from finvision.synthetic import business_days, random_walk_bars

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
out.mkdir(parents=True, exist_ok=True)

bars = random_walk_bars(business_days(dt.date(2023, 1, 3), count=160), seed=11)
frame = compute_indicators(bars)

print(f"{len(bars)} bars, {bars[0].date} .. {bars[-1].date}")
print("latest indicator values:")
for name in frame.SERIES:
    print(f"  {name:12s} {frame.series(name)[-1]:10.4f}")

tech = build_technical_chart(bars, frame, title=f"DEMO {bars[-1].date}")
signals = [(bars[-25].date, "BUY"), (bars[-12].date, "HOLD"), (bars[-6].date, "SELL")]
sig = build_signal_chart(bars, signals, title=f"DEMO SIGNALS {bars[-1].date}")

for name, spec in (("technical", tech), ("signal", sig)):
    png = render_png(spec)
    path = out / f"{name}.png"
    path.write_bytes(png)
    print(f"wrote {path} ({spec.width}x{spec.height}, sha256 {chart_digest(png)[:16]}...)")

# Rendering is a pure function of the chart spec, so equal inputs give equal bytes.
assert render_png(tech) == render_png(build_technical_chart(bars, frame, title=f"DEMO {bars[-1].date}"))
print("re-render is byte-identical")
