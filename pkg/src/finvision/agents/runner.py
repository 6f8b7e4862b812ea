"""Invoking agent roles through a chat backend."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ..errors import AgentError, GatewayError
from ..llm_gateway import Backend, ChatRequest, Message, cache_key
from .parsing import ParseEvent, TradingDecision, parse_decision
from .prompts import ROLE_SPECS, AgentRole, render_prompt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentSettings:
    """Model identity and sampling temperature per role tier."""

    analysis_model: str = "gpt-4o-mini"
    decision_model: str = "o1-mini"
    analysis_temperature: float = 0.3
    decision_temperature: float = 1.0
    retry_malformed: bool = False

    def model_for(self, role: AgentRole) -> str:
        return self.decision_model if ROLE_SPECS[role].tier == "decision" else self.analysis_model

    def temperature_for(self, role: AgentRole) -> float:
        if ROLE_SPECS[role].tier == "decision":
            return self.decision_temperature
        return self.analysis_temperature


@dataclass(frozen=True)
class RunLogEntry:
    date: str
    role: str
    request_digest: str
    response: str

    def to_dict(self) -> dict:
        return {"date": self.date, "role": self.role,
                "request_digest": self.request_digest, "response": self.response}


@dataclass
class AgentRunner:
    backend: Backend
    settings: AgentSettings = field(default_factory=AgentSettings)
    run_log: list[RunLogEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    def build_request(self, role: AgentRole, context: Mapping[str, Any],
                      attachments: Sequence[bytes] = ()) -> ChatRequest:
        spec = ROLE_SPECS[role]
        if attachments and not spec.vision:
            raise AgentError("text-only role cannot take image attachments", role=str(role))
        prompt = render_prompt(role, context)
        return ChatRequest(
            model=self.settings.model_for(role),
            temperature=self.settings.temperature_for(role),
            messages=(Message.user(prompt, attachments),),
        )

    def invoke(self, role: AgentRole, context: Mapping[str, Any],
               attachments: Sequence[bytes] = (), *, date: str = "") -> str:
        """Render, send and log one role invocation; returns the raw text."""
        request = self.build_request(role, context, attachments)
        try:
            response = self.backend.complete(request)
        except GatewayError as exc:
            raise AgentError(str(exc), role=str(role), date=date or None) from exc
        entry = RunLogEntry(date=date, role=str(role), request_digest=cache_key(request),
                            response=response.text)
        with self._lock:
            self.run_log.append(entry)
        return response.text

    def decide(self, context: Mapping[str, Any], *, date: str = "") -> tuple[TradingDecision, list[ParseEvent]]:
        text = self.invoke(AgentRole.DECISION, context, date=date)
        decision, events = parse_decision(text)
        if self.settings.retry_malformed and any(e.kind == "NoRecommendation" for e in events):
            logger.info("%s: malformed decision output, retrying once", date)
            text = self.invoke(AgentRole.DECISION, context, date=date)
            decision, retry_events = parse_decision(text)
            events = events + retry_events
        return decision, events
