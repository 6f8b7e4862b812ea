"""The three evaluation metrics on small hand-made equity curves.

    python demos/06_metrics.py
"""

from finvision.analytics import UndefinedSharpe, arr, mdd, sharpe

curves = {
    "steady climb": [100 * 1.001 ** k for k in range(127)],  # constant returns: Sharpe undefined
    "rally then slump": [100, 120, 90, 110],
    "round trip crash": [100, 50, 100, 25],
    "flat": [100.0] * 20,
}
print(f"{'curve':18s} {'ARR%':>9s} {'Sharpe':>9s} {'MDD%':>7s}")
for name, v in curves.items():
    try:
        s = f"{sharpe(v):9.2f}"
    except UndefinedSharpe:
        s = f"{'n/a':>9s}"
    print(f"{name:18s} {arr(v) * 100:9.2f} {s} {mdd(v) * 100:7.2f}")
