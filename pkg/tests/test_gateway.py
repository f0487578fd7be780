import json

import httpx
import pytest

from alignloop.errors import (
    MalformedReply,
    MissingPrecomputed,
    MissingSlot,
    ProviderUnavailable,
    RateLimited,
    TransportError,
)
from alignloop.gateway import (
    ChatRequest,
    EmbeddingProvider,
    Gateway,
    GatewayPolicy,
    HttpTransport,
    Message,
    ScriptedTransport,
    TapeTransport,
    text_sha256,
)
from alignloop.prompts import TEMPLATES, render


def req(text="hi", temperature=0.0):
    return ChatRequest("m", (Message("system", "s"), Message("user", text)), temperature, 64)


def ok_body(content):
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def http_transport(handler):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpTransport("http://model.test", api_key="sk-secret", client=client)


def test_scripted_reply_verbatim():
    gw = Gateway(ScriptedTransport({"hello": "  exact reply\n"}))
    assert gw.complete(req("hello"), tag="t") == "  exact reply\n"
    assert gw.counter["t"] == 1


def test_wire_format():
    seen = {}

    def handler(request: httpx.Request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=ok_body("pong"))

    gw = Gateway(http_transport(handler))
    assert gw.complete(req("ping", 0.0)) == "pong"
    assert seen["url"] == "http://model.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-secret"
    assert seen["body"] == {"model": "m", "temperature": 0.0, "max_tokens": 64,
                            "messages": [{"role": "system", "content": "s"},
                                         {"role": "user", "content": "ping"}]}


def test_429_twice_then_success():
    calls = []
    sleeps = []

    def handler(request):
        calls.append(1)
        if len(calls) <= 2:
            return httpx.Response(429, headers={"retry-after": "0.5"})
        return httpx.Response(200, json=ok_body("done"))

    gw = Gateway(http_transport(handler), GatewayPolicy(max_retries=2, backoff_ms=(10, 20)),
                 sleep=sleeps.append)
    assert gw.complete(req()) == "done"
    assert len(calls) == 3 and gw.attempts == 3
    assert sleeps == [0.5, 0.5]  # retry-after dominates the shorter backoff


def test_retries_exhausted_raises_last_error():
    gw = Gateway(http_transport(lambda r: httpx.Response(429)), GatewayPolicy(max_retries=2),
                 sleep=lambda s: None)
    with pytest.raises(RateLimited):
        gw.complete(req())
    assert gw.attempts == 3 and gw.calls == 0


def test_non_json_reply_is_malformed():
    gw = Gateway(http_transport(lambda r: httpx.Response(200, text="<html>oops")),
                 GatewayPolicy(max_retries=0))
    with pytest.raises(MalformedReply):
        gw.complete(req())


def test_missing_choices_is_malformed():
    gw = Gateway(http_transport(lambda r: httpx.Response(200, json={"x": 1})), GatewayPolicy(max_retries=0))
    with pytest.raises(MalformedReply):
        gw.complete(req())


def test_server_error_is_transport():
    gw = Gateway(http_transport(lambda r: httpx.Response(503)), GatewayPolicy(max_retries=1),
                 sleep=lambda s: None)
    with pytest.raises(TransportError) as ei:
        gw.complete(req())
    assert ei.value.status == 503


def test_valid_no_is_not_retried():
    n = []

    def handler(r):
        n.append(1)
        return httpx.Response(200, json=ok_body("no"))

    gw = Gateway(http_transport(handler))
    assert gw.complete(req()) == "no" and len(n) == 1


def test_tape_replays_byte_identically(tmp_path):
    gw = Gateway(ScriptedTransport({"a": "reply A", "b": "reply\tB"}))
    gw.complete(req("a"))
    gw.complete(req("b"))
    gw.save_tape(tmp_path / "tape.jsonl")
    replay = Gateway(TapeTransport.load(tmp_path / "tape.jsonl"))
    assert replay.complete(req("a")) == "reply A"
    assert replay.complete(req("b")) == "reply\tB"
    with pytest.raises(TransportError):
        Gateway(TapeTransport.load(tmp_path / "tape.jsonl"), GatewayPolicy(max_retries=0)).complete(req("c"))


def test_request_log_redacts_key(tmp_path):
    log = tmp_path / "log.jsonl"
    gw = Gateway(http_transport(lambda r: httpx.Response(200, json=ok_body("x"))), log_path=log)
    gw.complete(req())
    assert "sk-secret" not in log.read_text()


def test_render_align_template():
    system, user = render(TEMPLATES["align"], {"components": "subject: Who", "document": "Some text."})
    assert "subject: Who" in user and "Some text." in user
    assert system.startswith("TASK: align")


def test_render_missing_slot():
    with pytest.raises(MissingSlot) as ei:
        render(TEMPLATES["align"], {"components": "subject: Who"})
    assert ei.value.name == "document"


def test_render_empty_slot_allowed():
    _, user = render(TEMPLATES["align"], {"components": "", "document": ""})
    assert user == "Components:\n\n\nDocument:\n"


def test_render_does_not_rescan_values():
    _, user = render(TEMPLATES["verify"], {"query": "{docs}", "docs": "D"})
    assert user.startswith("Question:\n{docs}")


def test_all_templates_have_task_header():
    for name, t in TEMPLATES.items():
        assert t.system.startswith(f"TASK: {name}\n")


def test_embed_precomputed(tmp_path):
    p = tmp_path / "emb.jsonl"
    p.write_text(json.dumps({"sha256": text_sha256("q1"), "vec": [0.1, 0.2]}) + "\n")
    gw = Gateway(ScriptedTransport({}), embedder=EmbeddingProvider.from_jsonl(p))
    assert gw.embed(["q1"]) == [[0.1, 0.2]]
    a, b = gw.embed(["q1", "q1"])
    assert a == b
    with pytest.raises(MissingPrecomputed):
        gw.embed(["other"])


def test_embed_without_provider():
    with pytest.raises(ProviderUnavailable):
        Gateway(ScriptedTransport({})).embed(["x"])


def test_embed_endpoint_fills_gaps():
    def handler(r):
        body = json.loads(r.content)
        assert r.url.path == "/v1/embeddings"
        return httpx.Response(200, json={"data": [{"index": i, "embedding": [len(t), 1.0]}
                                                  for i, t in enumerate(body["input"])]})

    prov = EmbeddingProvider({text_sha256("a"): [9.0, 9.0]}, transport=http_transport(handler), model="bge")
    assert prov.embed(["a", "bbb"]) == [[9.0, 9.0], [3.0, 1.0]]
