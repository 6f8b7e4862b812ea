"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FinVisionError(Exception):
    """Base class for all package errors."""


class ConfigError(FinVisionError):
    """Invalid or inconsistent configuration."""


class DataError(FinVisionError):
    """Input market data or news could not be loaded or failed validation."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ChartError(FinVisionError):
    """A chart could not be built or rendered."""


class GatewayError(FinVisionError):
    """Base class for chat-completion backend failures."""


class TransportError(GatewayError):
    """Network-level failure that persisted through all retries."""


class GatewayTimeout(GatewayError):
    """The backend did not answer within the configured timeout."""


class HttpStatusError(GatewayError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body[:500]}")


class ScriptExhausted(GatewayError):
    """The scripted backend has no entry left for this request."""


class AgentError(FinVisionError):
    """An agent invocation failed; carries the role and trading date."""

    def __init__(self, message: str, *, role: str | None = None, date: str | None = None):
        self.role = role
        self.date = date
        tag = ", ".join(x for x in (role, date) if x)
        super().__init__(f"[{tag}] {message}" if tag else message)


class MissingPlaceholder(AgentError):
    def __init__(self, name: str, role: str | None = None):
        self.name = name
        super().__init__(f"missing placeholder {{{name}}}", role=role)


class GraphCycleError(FinVisionError):
    """The agent dependency graph contains a cycle."""
