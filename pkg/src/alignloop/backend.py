"""Judgment backend: renders catalog prompts, calls the gateway, parses replies."""
from __future__ import annotations

import hashlib
import threading
from collections import Counter
from typing import Any, Callable

from .errors import BackendError, MalformedReply, ReplyParseError, TransportError
from .gateway import ChatRequest, Gateway, Message
from .prompts import TEMPLATES, render

CACHED_TASKS = frozenset({"decompose", "align", "reflect"})


class Backend:
    """The alignment backend contract (``kind`` is ``llm`` or ``mock``).

    Whether verdicts come from a hosted model or the offline mock depends only
    on the gateway's transport; prompts and parsing are shared.
    """

    def __init__(self, gateway: Gateway, model: str = "mock", temperature: float = 0.0,
                 max_tokens: int = 512, fixture: Any = None):
        self.gateway = gateway
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.fixture = fixture
        self.calls: Counter[str] = Counter()
        self.cache_hits = 0
        self._cache: dict[str, Any] = {}
        self._lock = threading.Lock()

    @property
    def kind(self) -> str:
        return self.gateway.kind

    def request(self, name: str, slots: dict, history: tuple[Message, ...] = ()) -> ChatRequest:
        system, user = render(TEMPLATES[name], slots)
        msgs = (Message("system", system), Message("user", user)) + history
        return ChatRequest(self.model, msgs, self.temperature, self.max_tokens)

    def ask(self, name: str, slots: dict, parse: Callable[[str], Any],
            salvage: Callable[[str], Any] | None = None) -> Any:
        """Run one judgment; one corrective re-prompt on a malformed reply.

        If the re-prompted reply is still malformed, ``salvage`` (when given)
        makes the best of it instead of failing.
        """
        req = self.request(name, slots)
        key = None
        if name in CACHED_TASKS:
            key = hashlib.sha256((name + "\x00" + req.key()).encode()).hexdigest()
            with self._lock:
                if key in self._cache:
                    self.cache_hits += 1
                    return self._cache[key]
        try:
            reply = self._call(name, req)
            try:
                result = parse(reply)
            except ReplyParseError as exc:
                fix = (Message("assistant", reply),
                       Message("user", f"Your reply did not follow the required format ({exc}). "
                                       "Answer again using exactly the requested format."))
                retry = ChatRequest(req.model, req.messages + fix, req.temperature, req.max_tokens)
                reply = self._call(name, retry)
                try:
                    result = parse(reply)
                except ReplyParseError as exc2:
                    if salvage is not None:
                        return salvage(reply)
                    raise BackendError(f"{name}: unparseable reply after re-prompt: {exc2}") from None
        except (TransportError, MalformedReply) as exc:
            raise BackendError(f"{name}: {exc}") from exc
        if key is not None:
            with self._lock:
                self._cache[key] = result
        return result

    def _call(self, name: str, req: ChatRequest) -> str:
        reply = self.gateway.complete(req, tag=name)
        with self._lock:
            self.calls[name] += 1
        return reply
