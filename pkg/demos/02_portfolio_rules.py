"""How decisions turn into trades under the 10% cash reserve.

Walks a 10,000-dollar account through a handful of decisions and prints
each fill, any rule events, and the resulting account state.

    python demos/02_portfolio_rules.py
"""

import datetime as dt

from finvision.agents import TradingDecision
from finvision.portfolio import Portfolio, daily_reward, execute, mark_to_market

day = dt.date(2023, 6, 1)
account = Portfolio.start(10_000)
prev = mark_to_market(account, day, 100)

steps = [
    ("SELL", 3, 100.0, 101.0),   # nothing held yet
    ("BUY", 10, 101.0, 103.0),
    ("BUY", 10, 103.0, 102.5),
    ("HOLD", 0, 102.5, 104.0),
    ("SELL", 4, 104.0, 103.0),
]
for action, size, open_, close in steps:
    day += dt.timedelta(days=1)
    decision = TradingDecision(action, size, "demo")
    account, fill, events = execute(account, decision, open_, day)
    snap = mark_to_market(account, day, close)
    reward = daily_reward(prev, snap)
    prev = snap
    traded = f"{float(fill.shares):.4f} sh @ {open_:.2f}" if fill else "no trade"
    print(f"{day} {action:4s} {size:2d}%  {traded:24s} value {float(snap.total_value):10.2f}"
          f"  cash {float(snap.cash_percentage):6.2f}%  reward {float(reward):+8.2f}")
    for e in events:
        print(f"           event {e.kind}: {e.detail}")

# Force the reserve to bind: a mostly invested account asks for another 10%.
loaded = Portfolio(cash=1500, shares=85, avg_purchase_price=100, initial_capital=10_000)
after, fill, events = execute(loaded, TradingDecision("BUY", 10, "demo"), 100, day)
print(f"\nloaded account: asked for 10%, executed {float(fill.executed_pct):.2f}%,"
      f" cash left {float(after.cash):.2f} ({[e.kind for e in events]})")
