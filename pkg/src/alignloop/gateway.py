"""Model egress: chat completions, embeddings, retries, rate limiting, tapes.

Every model interaction in the package goes through :class:`Gateway`. The
transport behind it is swappable: HTTP for a real chat-completions server,
:class:`ScriptedTransport` for canned replies, :class:`TapeTransport` to replay
a recorded session, and ``alignloop.mockmodel.MockModel`` for the offline
deterministic model.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .errors import (
    MalformedReply,
    MissingPrecomputed,
    ProviderUnavailable,
    RateLimited,
    TransportError,
)

log = logging.getLogger(__name__)

DEFAULT_CHAT_PATH = "/v1/chat/completions"
DEFAULT_EMBED_PATH = "/v1/embeddings"


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise ValueError(f"bad message role {m.role!r}")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "messages": [asdict(m) for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ChatRequest":
        return cls(
            obj["model"],
            tuple(Message(m["role"], m["content"]) for m in obj["messages"]),
            obj.get("temperature", 0.0),
            obj.get("max_tokens", 512),
        )

    def key(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def last_user(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""


@dataclass
class GatewayPolicy:
    max_retries: int = 2
    backoff_ms: tuple[int, ...] = (250, 1000, 4000)
    max_concurrent: int = 4
    timeout: float = 60.0
    requests_per_second: float | None = None

    def delay(self, attempt: int) -> float:
        sched = self.backoff_ms or (0,)
        return sched[min(attempt, len(sched) - 1)] / 1000.0


class Transport(Protocol):
    kind: str

    def __call__(self, request: ChatRequest) -> str: ...


class HttpTransport:
    """POSTs the open chat-completions JSON body and reads ``choices[0].message.content``."""

    kind = "llm"

    def __init__(self, base_url: str, api_key: str = "", path: str = DEFAULT_CHAT_PATH,
                 timeout: float = 60.0, client: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self.path = path
        self.api_key = api_key
        self.client = client or httpx.Client(timeout=timeout)

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        if self.api_key:
            h["Authorization"] = f"Bearer {self.api_key}"
        return h

    def _post(self, path: str, body: dict) -> dict:
        try:
            resp = self.client.post(self.base_url + path, json=body, headers=self._headers())
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from None
        if resp.status_code == 429:
            ra = resp.headers.get("retry-after")
            try:
                retry_after = float(ra) if ra is not None else None
            except ValueError:
                retry_after = None
            raise RateLimited(retry_after)
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}", status=resp.status_code)
        try:
            return resp.json()
        except ValueError:
            raise MalformedReply("reply body is not JSON") from None

    def __call__(self, request: ChatRequest) -> str:
        obj = self._post(self.path, request.to_dict())
        try:
            content = obj["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedReply("reply has no choices[0].message.content") from None
        if not isinstance(content, str):
            raise MalformedReply("message content is not a string")
        return content

    def embed(self, model: str, texts: list[str], path: str = DEFAULT_EMBED_PATH) -> list[list[float]]:
        obj = self._post(path, {"model": model, "input": texts})
        try:
            data = sorted(obj["data"], key=lambda d: d.get("index", 0))
            return [[float(x) for x in d["embedding"]] for d in data]
        except (KeyError, TypeError, ValueError):
            raise MalformedReply("embedding reply has no data[].embedding") from None


class ScriptedTransport:
    """Replies keyed by the last user message; used for tests and dry runs."""

    kind = "mock"

    def __init__(self, script: dict[str, str | Exception | Sequence], default: str | None = None):
        self.script = {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in script.items()}
        self.default = default

    def __call__(self, request: ChatRequest) -> str:
        item = self.script.get(request.last_user, self.default)
        if isinstance(item, list):
            item = item.pop(0) if len(item) > 1 else item[0]
        if item is None:
            raise TransportError("no scripted reply for request")
        if isinstance(item, Exception):
            raise item
        return item


class TapeTransport:
    """Replays a recorded tape; requests are matched by their canonical hash."""

    kind = "replay"

    def __init__(self, entries: Iterable[dict]):
        self.replies = {}
        for e in entries:
            self.replies[e["key"]] = e["reply"]

    @classmethod
    def load(cls, path: str | Path) -> "TapeTransport":
        with open(path, encoding="utf-8") as fh:
            return cls(json.loads(line) for line in fh if line.strip())

    def __call__(self, request: ChatRequest) -> str:
        try:
            return self.replies[request.key()]
        except KeyError:
            raise TransportError("request not on tape") from None


class Gateway:
    """Shared, thread-safe front for a transport.

    Retries transport failures and malformed replies up to
    ``policy.max_retries`` times. Counts calls per tag and optionally records a
    replayable tape and a JSONL request log.
    """

    def __init__(self, transport: Transport, policy: GatewayPolicy | None = None, *,
                 record: bool = True, log_path: str | Path | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 embedder: "EmbeddingProvider | None" = None):
        self.transport = transport
        self.policy = policy or GatewayPolicy()
        self.record = record
        self.tape: list[dict] = []
        self.counter: Counter[str] = Counter()
        self.attempts = 0
        self.embedder = embedder
        self._sleep = sleep
        self._sem = threading.BoundedSemaphore(max(1, self.policy.max_concurrent))
        self._lock = threading.Lock()
        self._last_start = 0.0
        self._log_path = Path(log_path) if log_path else None

    @property
    def kind(self) -> str:
        return getattr(self.transport, "kind", "llm")

    @property
    def calls(self) -> int:
        return sum(self.counter.values())

    def _throttle(self) -> None:
        rps = self.policy.requests_per_second
        if not rps:
            return
        with self._lock:
            wait = self._last_start + 1.0 / rps - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_start = time.monotonic()

    def complete(self, request: ChatRequest, tag: str = "untagged") -> str:
        last_exc: Exception | None = None
        for attempt in range(self.policy.max_retries + 1):
            if attempt:
                delay = self.policy.delay(attempt - 1)
                if isinstance(last_exc, RateLimited) and last_exc.retry_after is not None:
                    delay = max(delay, last_exc.retry_after)
                self._sleep(delay)
            self._throttle()
            with self._sem:
                with self._lock:
                    self.attempts += 1
                try:
                    reply = self.transport(request)
                except (TransportError, MalformedReply) as exc:
                    last_exc = exc
                    log.warning("model call failed (attempt %d): %s", attempt + 1, exc)
                    continue
            with self._lock:
                self.counter[tag] += 1
                if self.record:
                    self.tape.append({"key": request.key(), "tag": tag,
                                      "request": request.to_dict(), "reply": reply})
                self._write_log(request, reply, tag)
            return reply
        assert last_exc is not None
        raise last_exc

    def _write_log(self, request: ChatRequest, reply: str, tag: str) -> None:
        if self._log_path is None:
            return
        entry = {"tag": tag, "request": request.to_dict(), "reply": reply,
                 "auth": "***redacted***"}
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def save_tape(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.tape:
                fh.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n")

    def embed(self, texts: list[str]) -> list[list[float]]:
        if self.embedder is None:
            raise ProviderUnavailable("no embedding provider configured")
        with self._lock:
            self.counter["embed"] += 1
        return self.embedder.embed(texts)


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class EmbeddingProvider:
    """Embeddings from a precomputed table (by text sha256), else from an endpoint."""

    precomputed: dict[str, list[float]] = field(default_factory=dict)
    transport: HttpTransport | None = None
    model: str = ""

    @classmethod
    def from_jsonl(cls, path: str | Path, **kw) -> "EmbeddingProvider":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    table[obj["sha256"]] = [float(x) for x in obj["vec"]]
        return cls(table, **kw)

    def embed(self, texts: list[str]) -> list[list[float]]:
        out: list[list[float] | None] = []
        missing = []
        for i, t in enumerate(texts):
            vec = self.precomputed.get(text_sha256(t))
            out.append(vec)
            if vec is None:
                missing.append(i)
        if missing:
            if self.transport is None:
                raise MissingPrecomputed(text_sha256(texts[missing[0]]))
            fresh = self.transport.embed(self.model, [texts[i] for i in missing])
            for i, vec in zip(missing, fresh):
                out[i] = vec
        return out  # type: ignore[return-value]
