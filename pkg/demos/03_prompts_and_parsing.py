"""Prompt rendering and the tolerant decision parser.

Renders a decision prompt from a portfolio snapshot, then parses a few
replies of varying quality, showing the fallbacks and the events they raise.

    python demos/03_prompts_and_parsing.py
"""

import datetime as dt

from finvision.agents import AgentRole, parse_decision, render_prompt
from finvision.agents.prompts import placeholders, template_for
from finvision.portfolio import Portfolio, mark_to_market

snap = mark_to_market(Portfolio(4000, 40, 152.8, 10_000), dt.date(2023, 6, 1), 161.4)
context = {name: f"<{name}>" for name in placeholders(template_for(AgentRole.DECISION))}
context.update(snap.prompt_context(), ticker="AAPL", date="2023-06-01")
prompt = render_prompt(AgentRole.DECISION, context)
print("decision prompt, first lines:")
for line in prompt.splitlines()[:12]:
    print("  |", line)

replies = {
    "canonical": "Recommendation: BUY\nPosition Size: 6\nExplanation: Trend and news agree.",
    "decorated": "## **Recommendation:** **SELL**\n**Position Size:** 3% of portfolio\n**Explanation:** Trim.",
    "oversized": "Recommendation: BUY\nPosition Size: 25%\nExplanation: Very confident.",
    "hold with size": "Recommendation: HOLD\nPosition Size: 4\nExplanation: Wait.",
    "no verdict": "Markets are uncertain; I would rather not say.",
}
print("\nparsed replies:")
for label, text in replies.items():
    decision, events = parse_decision(text)
    note = ", ".join(e.kind for e in events) or "clean"
    print(f"  {label:15s} -> {decision.action.value:4s} {decision.position_size:2d}   [{note}]")
