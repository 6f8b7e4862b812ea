"""Agent roles and prompt-template rendering."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from ..errors import MissingPlaceholder

PROMPT_VERSION = "v1"

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)(?::([^{}]*))?\}")


class AgentRole(str, enum.Enum):
    SUMMARIZER = "Summarizer"
    TECHNICAL_ANALYST = "TechnicalAnalyst"
    REFLECTION_SHORT = "ReflectionPerformanceShort"
    REFLECTION_MEDIUM = "ReflectionPerformanceMedium"
    REFLECTION_VISUAL = "ReflectionVisual"
    DECISION = "Decision"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RoleSpec:
    template: str
    vision: bool
    tier: str  # "analysis" or "decision"; selects model and temperature


ROLE_SPECS: dict[AgentRole, RoleSpec] = {
    AgentRole.SUMMARIZER: RoleSpec("summarizer", False, "analysis"),
    AgentRole.TECHNICAL_ANALYST: RoleSpec("technical_analyst", True, "analysis"),
    AgentRole.REFLECTION_SHORT: RoleSpec("reflection_performance", False, "analysis"),
    AgentRole.REFLECTION_MEDIUM: RoleSpec("reflection_performance", False, "analysis"),
    AgentRole.REFLECTION_VISUAL: RoleSpec("reflection_visual", True, "analysis"),
    AgentRole.DECISION: RoleSpec("decision", False, "decision"),
}


@lru_cache(maxsize=None)
def load_template(name: str, version: str = PROMPT_VERSION) -> str:
    res = resources.files("finvision.agents") / "prompts" / f"{name}.{version}.txt"
    return res.read_text(encoding="utf-8").rstrip("\n")


def template_for(role: AgentRole) -> str:
    return load_template(ROLE_SPECS[role].template)


def placeholders(template: str) -> list[str]:
    seen: list[str] = []
    for m in _PLACEHOLDER.finditer(template):
        if m.group(1) not in seen:
            seen.append(m.group(1))
    return seen


def render_template(template: str, context: Mapping[str, Any], role: AgentRole | None = None) -> str:
    def sub(m: re.Match) -> str:
        name, spec = m.group(1), m.group(2)
        if name not in context:
            raise MissingPlaceholder(name, role=str(role) if role else None)
        value = context[name]
        return format(value, spec) if spec else str(value)

    return _PLACEHOLDER.sub(sub, template)


def render_prompt(role: AgentRole, context: Mapping[str, Any]) -> str:
    """Fill the role's template from ``context``; extra keys are ignored."""
    return render_template(template_for(role), context, role)
