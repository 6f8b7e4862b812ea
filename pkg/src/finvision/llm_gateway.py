"""Chat-completion abstraction with HTTP, scripted and disk-cached backends.

All backends expose ``complete(request) -> ChatResponse``. The HTTP backend
speaks the OpenAI-compatible ``/chat/completions`` protocol; the scripted
backend replays canned responses for reproducible runs; the cache backend
wraps either and stores one JSON file per request digest.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import shutil
import socket
import tempfile
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .errors import (
    GatewayError,
    GatewayTimeout,
    HttpStatusError,
    ScriptExhausted,
    TransportError,
)

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
API_KEY_ENV = "FINVISION_API_KEY"
ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    def __post_init__(self) -> None:
        if self.media_type == "image/png" and not self.data.startswith(PNG_SIGNATURE):
            raise ValueError("image part is not a valid PNG")

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()

    def data_uri(self) -> str:
        return f"data:{self.media_type};base64,{base64.b64encode(self.data).decode('ascii')}"


Part = TextPart | ImagePart


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown message role {self.role!r}")
        if not self.parts:
            raise ValueError("message needs at least one part")

    @classmethod
    def user(cls, text: str, images: Iterable[bytes] = ()) -> "Message":
        return cls("user", (TextPart(text), *(ImagePart(i) for i in images)))

    @property
    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ChatRequest:
    model: str
    temperature: float
    messages: tuple[Message, ...]

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must be a system or user message")
        if not self.temperature >= 0:
            raise ValueError("temperature must be non-negative")

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    backend_id: str = ""

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChatResponse":
        if not isinstance(d.get("text"), str):
            raise ValueError("response text missing")
        return cls(
            text=d["text"],
            prompt_tokens=int(d.get("prompt_tokens", 0)),
            completion_tokens=int(d.get("completion_tokens", 0)),
            backend_id=str(d.get("backend_id", "")),
        )


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def _canonical(request: ChatRequest) -> dict:
    messages = []
    for m in request.messages:
        parts = []
        for p in m.parts:
            if isinstance(p, TextPart):
                parts.append({"type": "text", "text": p.text})
            else:
                parts.append({"type": "image", "media_type": p.media_type, "sha256": p.digest})
        messages.append({"role": m.role, "parts": parts})
    return {"model": request.model, "temperature": float(request.temperature), "messages": messages}


def cache_key(request: ChatRequest) -> str:
    """SHA-256 hex digest of the request's canonical JSON form.

    Images contribute their content digest, so any byte change alters the key.
    """
    blob = json.dumps(_canonical(request), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# scripted backend


@dataclass(frozen=True)
class ScriptEntry:
    response: str
    match: str | None = None


class ScriptedBackend:
    """Replays responses in order.

    Each call takes the first unconsumed entry whose ``match`` (if any) is a
    substring of the request's prompt text. When every entry carries a
    ``match``, concurrent callers with different prompts still receive a
    deterministic assignment.
    """

    backend_id = "scripted"

    def __init__(self, entries: Iterable[ScriptEntry | str]):
        self.entries = [e if isinstance(e, ScriptEntry) else ScriptEntry(e) for e in entries]
        self._used = [False] * len(self.entries)
        self._start = 0
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        entries = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries.append(ScriptEntry(response=str(obj["response"]), match=obj.get("match")))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise GatewayError(f"{path}: line {lineno}: bad script entry ({exc})") from None
        return cls(entries)

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = request.prompt_text
        with self._lock:
            self.calls += 1
            for i in range(self._start, len(self.entries)):
                if self._used[i]:
                    continue
                e = self.entries[i]
                if e.match is None or e.match in prompt:
                    self._used[i] = True
                    while self._start < len(self._used) and self._used[self._start]:
                        self._start += 1
                    return ChatResponse(text=e.response, backend_id=self.backend_id)
        raise ScriptExhausted(f"no script entry left for prompt starting {prompt[:80]!r}")

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def checkpoint_state(self) -> dict:
        with self._lock:
            return {"used": [i for i, u in enumerate(self._used) if u]}

    def restore_state(self, state: dict) -> None:
        with self._lock:
            self._used = [False] * len(self.entries)
            for i in state.get("used", ()):
                self._used[i] = True
            self._start = 0
            while self._start < len(self._used) and self._used[self._start]:
                self._start += 1


# --------------------------------------------------------------------------
# HTTP backend


def request_body(request: ChatRequest) -> dict:
    """JSON body for ``POST {base_url}/chat/completions``."""
    messages = []
    for m in request.messages:
        content = []
        for p in m.parts:
            if isinstance(p, TextPart):
                content.append({"type": "text", "text": p.text})
            else:
                content.append({"type": "image_url", "image_url": {"url": p.data_uri()}})
        messages.append({"role": m.role, "content": content})
    return {"model": request.model, "temperature": request.temperature, "messages": messages}


class HttpBackend:
    """OpenAI-compatible chat-completions client.

    Transport errors, timeouts, 429 and 5xx responses are retried up to
    ``max_retries`` times with exponential backoff (``backoff * 2**k``,
    +/- ``jitter``). Other HTTP errors are raised immediately.
    """

    backend_id = "http"

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        jitter: float = 0.2,
        max_concurrency: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.jitter = jitter
        self._sem = threading.BoundedSemaphore(max_concurrency)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.calls = 0

    def _post(self, payload: bytes) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=payload, headers=headers, method="POST")
        with self._sem:
            self.calls += 1
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = json.dumps(request_body(request)).encode("utf-8")
        last: GatewayError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                self._sleep(delay * (1 + self._rng.uniform(-self.jitter, self.jitter)))
            try:
                data = self._post(payload)
            except urllib.error.HTTPError as exc:
                body = exc.read().decode("utf-8", "replace")
                err = HttpStatusError(exc.code, body)
                if exc.code == 429 or exc.code >= 500:
                    last = err
                    logger.warning("retryable HTTP %s (attempt %d)", exc.code, attempt + 1)
                    continue
                raise err from None
            except (socket.timeout, TimeoutError) as exc:
                last = GatewayTimeout(f"no answer within {self.timeout}s: {exc}")
                continue
            except urllib.error.URLError as exc:
                if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                    last = GatewayTimeout(f"no answer within {self.timeout}s")
                else:
                    last = TransportError(f"transport failure: {exc.reason}")
                continue
            except (ConnectionError, OSError) as exc:
                last = TransportError(f"transport failure: {exc}")
                continue
            except json.JSONDecodeError as exc:
                raise GatewayError(f"response is not JSON: {exc}") from None
            try:
                text = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise GatewayError(f"unexpected response shape: {str(data)[:300]}") from None
            usage = data.get("usage") or {}
            return ChatResponse(
                text=text if text is not None else "",
                prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
                completion_tokens=int(usage.get("completion_tokens", 0) or 0),
                backend_id=self.backend_id,
            )
        assert last is not None
        raise last


# --------------------------------------------------------------------------
# disk cache


class CachedBackend:
    """Content-addressed response cache in front of another backend.

    Entries live at ``<cache_dir>/<digest>.json`` and are written with
    write-then-rename. Unreadable entries count as misses.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _read(self, key: str) -> ChatResponse | None:
        try:
            return ChatResponse.from_dict(json.loads(self.path_for(key).read_text(encoding="utf-8")))
        except FileNotFoundError:
            return None
        except (OSError, ValueError, TypeError, AttributeError):
            logger.warning("ignoring corrupted cache entry %s", key)
            return None

    def _write(self, key: str, response: ChatResponse) -> None:
        data = json.dumps(response.to_dict(), sort_keys=True, indent=1).encode("utf-8")
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, self.path_for(key))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = cache_key(request)
        hit = self._read(key)
        if hit is not None:
            self.hits += 1
            return hit
        self.misses += 1
        response = self.inner.complete(request)
        self._write(key, response)
        return response

    def checkpoint_state(self) -> dict:
        inner = getattr(self.inner, "checkpoint_state", None)
        return inner() if inner else {}

    def restore_state(self, state: dict) -> None:
        inner = getattr(self.inner, "restore_state", None)
        if inner:
            inner(state)


@dataclass
class CacheStats:
    entries: int = 0
    bytes: int = 0

    def __str__(self) -> str:
        return f"{self.entries} entries, {self.bytes} bytes"


def cache_stats(cache_dir: str | Path) -> CacheStats:
    stats = CacheStats()
    d = Path(cache_dir)
    if not d.is_dir():
        return stats
    for p in d.glob("*.json"):
        if not p.name.startswith(".tmp-"):
            stats.entries += 1
            stats.bytes += p.stat().st_size
    return stats


def cache_clear(cache_dir: str | Path) -> None:
    """Remove every entry; the directory is swapped out in one rename."""
    d = Path(cache_dir)
    if not d.exists():
        return
    trash = d.with_name(f".{d.name}.trash-{os.getpid()}-{time.monotonic_ns()}")
    os.rename(d, trash)
    d.mkdir(parents=True, exist_ok=True)
    shutil.rmtree(trash, ignore_errors=True)


def make_backend(kind: str, *, base_url: str = "", script: str | Path | None = None,
                 cache_dir: str | Path | None = None, **http_kwargs) -> Backend:
    """Build a backend from configuration values.

    ``kind`` is ``http``, ``scripted`` or ``cached-http``; a ``cache_dir`` also
    wraps the scripted backend when given.
    """
    if kind == "scripted":
        if script is None:
            raise GatewayError("scripted backend needs a script file")
        backend: Backend = ScriptedBackend.from_file(script)
        return CachedBackend(backend, cache_dir) if cache_dir else backend
    if kind in ("http", "cached-http"):
        if not base_url:
            raise GatewayError("http backend needs a base_url")
        backend = HttpBackend(base_url, **http_kwargs)
        if kind == "cached-http":
            if cache_dir is None:
                raise GatewayError("cached-http backend needs a cache directory")
            return CachedBackend(backend, cache_dir)
        return backend
    raise GatewayError(f"unknown backend kind {kind!r}")


__all__ = [
    "TextPart", "ImagePart", "Message", "ChatRequest", "ChatResponse", "Backend",
    "cache_key", "request_body", "ScriptEntry", "ScriptedBackend", "HttpBackend",
    "CachedBackend", "CacheStats", "cache_stats", "cache_clear", "make_backend",
]
