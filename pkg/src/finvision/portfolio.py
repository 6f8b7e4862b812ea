"""Cash/share accounting with the hard trading rules.

State is kept in exact rationals (:class:`fractions.Fraction`): value
conservation at fills and the telescoping reward sum then hold exactly.
Money is rounded to cents only when serialized.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Union

from .agents.parsing import Action, TradingDecision

Number = Union[int, float, Fraction]

CASH_RESERVE = Fraction(1, 10)


def as_fraction(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError(f"non-finite value {x}")
    return Fraction(x)


def money(x: Fraction) -> float:
    return round(float(x), 2)


def frac_to_str(x: Fraction | None) -> str | None:
    return None if x is None else f"{x.numerator}/{x.denominator}"


def frac_from_str(s: str | None) -> Fraction | None:
    return None if s is None else Fraction(s)


@dataclass(frozen=True)
class RuleEvent:
    kind: str  # CashReserveClamped | CashReserveBlocked | NoPositionToSell | SellCappedAtPosition | BelowOneShare
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class Fill:
    date: dt.date
    action: Action
    shares: Fraction
    price: Fraction
    requested_pct: int
    executed_pct: Fraction
    cash_after: Fraction
    shares_after: Fraction

    CSV_HEADER = ("date", "action", "shares", "price", "requested_pct", "executed_pct",
                  "cash_after", "shares_after")

    def csv_row(self) -> list[str]:
        return [
            self.date.isoformat(), self.action.value, f"{float(self.shares):.6f}",
            f"{float(self.price):.2f}", str(self.requested_pct), f"{float(self.executed_pct):.4f}",
            f"{float(self.cash_after):.2f}", f"{float(self.shares_after):.6f}",
        ]

    def to_dict(self) -> dict:
        return dict(zip(self.CSV_HEADER, [
            self.date.isoformat(), self.action.value, round(float(self.shares), 6),
            money(self.price), self.requested_pct, round(float(self.executed_pct), 4),
            money(self.cash_after), round(float(self.shares_after), 6),
        ]))

    def to_state(self) -> dict:
        return {
            "date": self.date.isoformat(), "action": self.action.value,
            "shares": frac_to_str(self.shares), "price": frac_to_str(self.price),
            "requested_pct": self.requested_pct, "executed_pct": frac_to_str(self.executed_pct),
            "cash_after": frac_to_str(self.cash_after), "shares_after": frac_to_str(self.shares_after),
        }

    @classmethod
    def from_state(cls, d: dict) -> "Fill":
        return cls(
            date=dt.date.fromisoformat(d["date"]), action=Action(d["action"]),
            shares=Fraction(d["shares"]), price=Fraction(d["price"]),
            requested_pct=int(d["requested_pct"]), executed_pct=Fraction(d["executed_pct"]),
            cash_after=Fraction(d["cash_after"]), shares_after=Fraction(d["shares_after"]),
        )


@dataclass(frozen=True)
class PortfolioSnapshot:
    date: dt.date
    price: Fraction
    cash: Fraction
    shares: Fraction
    avg_purchase_price: Fraction | None
    total_value: Fraction

    @property
    def cash_percentage(self) -> Fraction:
        return self.cash / self.total_value * 100

    @property
    def unrealized_pl(self) -> Fraction:
        if not self.shares or self.avg_purchase_price is None:
            return Fraction(0)
        return (self.price - self.avg_purchase_price) * self.shares

    @property
    def unrealized_pct(self) -> Fraction:
        if not self.shares or self.avg_purchase_price is None:
            return Fraction(0)
        return (self.price - self.avg_purchase_price) / self.avg_purchase_price * 100

    def prompt_context(self) -> dict:
        """Values for the decision prompt's portfolio placeholders."""
        return {
            "current_shares": round(float(self.shares), 4),
            "current_price": float(self.price),
            "avg_purchase_price": float(self.avg_purchase_price or 0),
            "total_value": float(self.total_value),
            "cash_reserve": float(self.cash),
            "cash_percentage": float(self.cash_percentage),
            "unrealized_pl": float(self.unrealized_pl),
            "unrealized_profit_percentage": float(self.unrealized_pct),
        }

    def to_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "price": money(self.price),
            "cash": money(self.cash),
            "shares": round(float(self.shares), 6),
            "avg_purchase_price": None if self.avg_purchase_price is None else money(self.avg_purchase_price),
            "total_value": money(self.total_value),
            "cash_percentage": money(self.cash_percentage),
            "unrealized_pl": money(self.unrealized_pl),
            "unrealized_pct": money(self.unrealized_pct),
        }


@dataclass(frozen=True)
class Portfolio:
    cash: Fraction
    shares: Fraction
    avg_purchase_price: Fraction | None
    initial_capital: Fraction

    def __post_init__(self) -> None:
        if self.cash < 0 or self.shares < 0:
            raise ValueError("cash and shares must be non-negative")
        if (self.avg_purchase_price is None) != (self.shares == 0):
            raise ValueError("avg_purchase_price is defined exactly when shares > 0")

    @classmethod
    def start(cls, capital: Number) -> "Portfolio":
        capital = as_fraction(capital)
        if capital <= 0:
            raise ValueError("initial capital must be positive")
        return cls(cash=capital, shares=Fraction(0), avg_purchase_price=None, initial_capital=capital)

    def total_value(self, price: Number) -> Fraction:
        return self.cash + self.shares * as_fraction(price)

    def to_state(self) -> dict:
        return {
            "cash": frac_to_str(self.cash), "shares": frac_to_str(self.shares),
            "avg_purchase_price": frac_to_str(self.avg_purchase_price),
            "initial_capital": frac_to_str(self.initial_capital),
        }

    @classmethod
    def from_state(cls, d: dict) -> "Portfolio":
        return cls(Fraction(d["cash"]), Fraction(d["shares"]),
                   frac_from_str(d["avg_purchase_price"]), Fraction(d["initial_capital"]))


def execute(portfolio: Portfolio, decision: TradingDecision, price: Number, date: dt.date,
            *, integer_shares: bool = False) -> tuple[Portfolio, Fill | None, list[RuleEvent]]:
    """Apply ``decision`` at ``price``.

    Sizes are percentages of total portfolio value. BUYs are clamped so at
    least 10% of the post-trade value stays in cash; SELLs are capped at the
    shares held. Rule violations become events, never exceptions.
    """
    price = as_fraction(price)
    if price <= 0:
        raise ValueError(f"execution price must be positive, got {price}")
    if decision.action is Action.HOLD:
        return portfolio, None, []

    total = portfolio.total_value(price)
    target = Fraction(decision.position_size, 100) * total
    events: list[RuleEvent] = []

    if decision.action is Action.BUY:
        # value is unchanged by a fill, so the post-trade reserve is 10% of `total`
        headroom = portfolio.cash - CASH_RESERVE * total
        spend = min(target, headroom)
        if spend <= 0:
            events.append(RuleEvent("CashReserveBlocked",
                                    f"{date}: BUY {decision.position_size}% blocked by 10% cash reserve"))
            return portfolio, None, events
        if spend < target:
            events.append(RuleEvent("CashReserveClamped",
                                    f"{date}: BUY {decision.position_size}% clamped to "
                                    f"{float(spend / total * 100):.4f}% by 10% cash reserve"))
        bought = spend / price
        if integer_shares:
            bought = Fraction(math.floor(bought))
            if bought == 0:
                events.append(RuleEvent("BelowOneShare", f"{date}: BUY rounds to zero whole shares"))
                return portfolio, None, events
            spend = bought * price
        new_shares = portfolio.shares + bought
        old_cost = portfolio.shares * (portfolio.avg_purchase_price or 0)
        new = replace(portfolio, cash=portfolio.cash - spend, shares=new_shares,
                      avg_purchase_price=(old_cost + spend) / new_shares)
        moved = bought
    else:
        if portfolio.shares == 0:
            events.append(RuleEvent("NoPositionToSell", f"{date}: SELL with no shares held"))
            return portfolio, None, events
        sold = target / price
        if integer_shares:
            sold = Fraction(math.floor(sold))
            if sold == 0:
                events.append(RuleEvent("BelowOneShare", f"{date}: SELL rounds to zero whole shares"))
                return portfolio, None, events
        if sold >= portfolio.shares:
            if sold > portfolio.shares:
                events.append(RuleEvent("SellCappedAtPosition",
                                        f"{date}: SELL {decision.position_size}% capped at shares held"))
            sold = portfolio.shares
        left = portfolio.shares - sold
        new = replace(portfolio, cash=portfolio.cash + sold * price, shares=left,
                      avg_purchase_price=portfolio.avg_purchase_price if left else None)
        moved = sold

    fill = Fill(
        date=date, action=decision.action, shares=moved, price=price,
        requested_pct=decision.position_size, executed_pct=moved * price / total * 100,
        cash_after=new.cash, shares_after=new.shares,
    )
    return new, fill, events


def mark_to_market(portfolio: Portfolio, date: dt.date, price: Number) -> PortfolioSnapshot:
    price = as_fraction(price)
    if price <= 0:
        raise ValueError(f"mark price must be positive, got {price}")
    return PortfolioSnapshot(
        date=date, price=price, cash=portfolio.cash, shares=portfolio.shares,
        avg_purchase_price=portfolio.avg_purchase_price, total_value=portfolio.total_value(price),
    )


def daily_reward(prev: PortfolioSnapshot, cur: PortfolioSnapshot) -> Fraction:
    if not prev.date < cur.date:
        raise ValueError(f"snapshots out of order: {prev.date} then {cur.date}")
    return cur.total_value - prev.total_value
