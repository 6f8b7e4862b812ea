"""Parsing and formatting of the decision agent's structured output.

:func:`parse_decision` never raises: every input yields a valid
:class:`TradingDecision` plus a list of events describing any repair.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

NO_EXPLANATION = "(no explanation provided)"


class Action(str, enum.Enum):
    BUY = "BUY"
    SELL = "SELL"
    HOLD = "HOLD"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TradingDecision:
    action: Action
    position_size: int
    explanation: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "action", Action(self.action))
        if self.action is Action.HOLD:
            if self.position_size != 0:
                raise ValueError("HOLD decisions carry position size 0")
        elif not 1 <= self.position_size <= 10:
            raise ValueError(f"position size must be in [1, 10], got {self.position_size}")
        if not self.explanation.strip():
            raise ValueError("explanation must be non-empty")

    @classmethod
    def hold(cls, explanation: str = NO_EXPLANATION) -> "TradingDecision":
        return cls(Action.HOLD, 0, explanation)

    def to_dict(self) -> dict:
        return {"action": self.action.value, "position_size": self.position_size,
                "explanation": self.explanation}

    @classmethod
    def from_dict(cls, d: dict) -> "TradingDecision":
        return cls(Action(d["action"]), int(d["position_size"]), d["explanation"])


@dataclass(frozen=True)
class ParseEvent:
    kind: str  # NoRecommendation | SizeOutOfRange | HoldWithNonzeroSize | MissingExplanation
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


_DECOR = r"[\s#>*_\-]*"
_RECOMMENDATION = re.compile(
    rf"^{_DECOR}recommendation[\s*_]*:[\s*_\[]*(buy|sell|hold)\b", re.IGNORECASE | re.MULTILINE
)
_SIZE_LABEL = re.compile(rf"^{_DECOR}position\s*size[\s*_]*:", re.IGNORECASE | re.MULTILINE)
_INTEGER = re.compile(r"-?\d+")
_EXPLANATION = re.compile(rf"^{_DECOR}explanation[\s*_]*:[*_]*", re.IGNORECASE | re.MULTILINE)


def format_decision(decision: TradingDecision) -> str:
    return (
        f"Recommendation: {decision.action.value}\n"
        f"Position Size: {decision.position_size}\n"
        f"Explanation: {decision.explanation}"
    )


def parse_decision(text: str) -> tuple[TradingDecision, list[ParseEvent]]:
    """Extract (action, size, explanation) from free-form model output.

    Labels are matched case-insensitively and may be wrapped in markdown
    emphasis. Unparsable output degrades to HOLD/0 with a
    ``NoRecommendation`` event; out-of-range sizes are clamped into [1, 10]
    and a non-zero HOLD size is reset to 0, each with an event.
    """
    events: list[ParseEvent] = []
    rec = _RECOMMENDATION.search(text)
    if rec is None:
        events.append(ParseEvent("NoRecommendation", f"no parsable recommendation in {text[:120]!r}"))
        body = text.strip()
        return TradingDecision.hold(body or NO_EXPLANATION), events
    action = Action(rec.group(1).upper())

    size: int | None = None
    size_label = _SIZE_LABEL.search(text)
    if size_label is not None:
        num = _INTEGER.search(text, size_label.end())
        if num is not None:
            size = int(num.group())

    exp = _EXPLANATION.search(text)
    if exp is not None:
        explanation = text[exp.end():].strip()
    else:
        # everything that is not the recommendation or size line
        lines = text.splitlines()
        skip = {text.count("\n", 0, rec.start())}
        if size_label is not None:
            skip.add(text.count("\n", 0, size_label.start()))
        explanation = "\n".join(l for i, l in enumerate(lines) if i not in skip).strip()
    if not explanation:
        events.append(ParseEvent("MissingExplanation", "decision carried no explanation"))
        explanation = NO_EXPLANATION

    if action is Action.HOLD:
        if size:
            events.append(ParseEvent("HoldWithNonzeroSize", f"HOLD with size {size} coerced to 0"))
        size = 0
    else:
        if size is None or not 1 <= size <= 10:
            clamped = 1 if size is None else min(max(size, 1), 10)
            events.append(ParseEvent("SizeOutOfRange", f"{action.value} size {size} clamped to {clamped}"))
            size = clamped
    return TradingDecision(action, size, explanation), events
