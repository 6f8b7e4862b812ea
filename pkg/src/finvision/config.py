"""Run configuration: a single JSON document, overridable field by field."""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agents.runner import AgentSettings
from .errors import ConfigError
from .market_data import IndicatorParams

BACKEND_KINDS = ("http", "scripted", "cached-http")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"
    base_url: str = "https://api.openai.com/v1"
    script: str | None = None
    cache_dir: str | None = None
    timeout: float = 120.0
    max_retries: int = 3
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}; expected one of {', '.join(BACKEND_KINDS)}")


@dataclass(frozen=True)
class Windows:
    chart: int = 60
    signal: int = 30
    short: int = 7
    medium: int = 30

    def __post_init__(self) -> None:
        for name, v in dataclasses.asdict(self).items():
            if v < 1:
                raise ConfigError(f"window {name} must be >= 1, got {v}")


@dataclass(frozen=True)
class RunConfig:
    ticker: str
    bars_path: str
    news_path: str | None
    warmup_start: dt.date
    warmup_end: dt.date
    test_start: dt.date
    test_end: dt.date
    initial_capital: float = 100_000.0
    backend: BackendConfig = field(default_factory=BackendConfig)
    agents: AgentSettings = field(default_factory=AgentSettings)
    indicators: IndicatorParams = field(default_factory=IndicatorParams)
    windows: Windows = field(default_factory=Windows)
    annual_days: int = 252
    risk_free: float = 0.0
    news_lookback_days: int = 1
    summarize_empty_news: bool = False
    reset_portfolio_at_test: bool = True
    reward_mode: str = "absolute"
    integer_shares: bool = False
    use_adjusted: bool = False
    technical_size: tuple[int, int] = (1200, 900)
    signal_size: tuple[int, int] = (1000, 500)
    agent_concurrency: int = 1

    def __post_init__(self) -> None:
        if not self.ticker.strip():
            raise ConfigError("ticker must be non-empty")
        object.__setattr__(self, "ticker", self.ticker.strip().upper())
        if self.warmup_start > self.warmup_end:
            raise ConfigError("warmup_start is after warmup_end")
        if self.test_start > self.test_end:
            raise ConfigError("test window is empty")
        if not self.warmup_end < self.test_start:
            raise ConfigError("warmup must end before the test window starts")
        if not self.initial_capital > 0:
            raise ConfigError("initial_capital must be positive")
        if self.reward_mode not in ("absolute", "percent"):
            raise ConfigError("reward_mode must be 'absolute' or 'percent'")
        if self.news_lookback_days < 1 or self.agent_concurrency < 1 or self.annual_days < 1:
            raise ConfigError("news_lookback_days, agent_concurrency and annual_days must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("warmup_start", "warmup_end", "test_start", "test_end"):
            d[k] = d[k].isoformat()
        d["technical_size"] = list(self.technical_size)
        d["signal_size"] = list(self.signal_size)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: str | Path | None = None) -> "RunConfig":
        """Build from a JSON-style dict; relative paths resolve against ``base_dir``."""
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            for k in ("warmup_start", "warmup_end", "test_start", "test_end"):
                if isinstance(d.get(k), str):
                    d[k] = dt.date.fromisoformat(d[k])
            nested = {"backend": BackendConfig, "agents": AgentSettings,
                      "indicators": IndicatorParams, "windows": Windows}
            for k, typ in nested.items():
                if isinstance(d.get(k), dict):
                    d[k] = typ(**d[k])
            for k in ("technical_size", "signal_size"):
                if k in d:
                    d[k] = tuple(int(x) for x in d[k])
            if base_dir is not None:
                base = Path(base_dir)
                for k in ("bars_path", "news_path"):
                    if d.get(k):
                        d[k] = str(_resolve(base, d[k]))
                b = d.get("backend")
                if isinstance(b, BackendConfig):
                    upd = {}
                    for k in ("script", "cache_dir"):
                        if getattr(b, k):
                            upd[k] = str(_resolve(base, getattr(b, k)))
                    d["backend"] = dataclasses.replace(b, **upd)
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw.pop("output_dir", None)
        raw.pop("log_level", None)
        return cls.from_dict(raw, base_dir=path.parent)


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else (base / q)


def apply_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Return ``config`` with dotted-key overrides (``backend.kind=...``) applied."""
    d = config.to_dict()
    for key, value in overrides.items():
        target = d
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(target.get(p), dict):
                raise ConfigError(f"unknown config key {key!r}")
            target = target[p]
        if parts[-1] not in target:
            raise ConfigError(f"unknown config key {key!r}")
        target[parts[-1]] = value
    return RunConfig.from_dict(d)
