"""Prompt rendering, agent invocation and decision parsing."""

from .parsing import Action, ParseEvent, TradingDecision, format_decision, parse_decision
from .prompts import (
    PROMPT_VERSION,
    ROLE_SPECS,
    AgentRole,
    load_template,
    placeholders,
    render_prompt,
    template_for,
)
from .runner import AgentRunner, AgentSettings, RunLogEntry

__all__ = [
    "Action", "ParseEvent", "TradingDecision", "format_decision", "parse_decision",
    "PROMPT_VERSION", "ROLE_SPECS", "AgentRole", "load_template", "placeholders",
    "render_prompt", "template_for", "AgentRunner", "AgentSettings", "RunLogEntry",
]
