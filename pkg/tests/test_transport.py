from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from simukit.errors import ReplayMismatch, TransportError
from simukit.orchestrator.prompts import AgentRole
from simukit.orchestrator.transport import (
    REQUEST,
    RESPONSE,
    AgentMessage,
    HTTPTransport,
    ReplayTransport,
    ScriptedTransport,
    Transcript,
)

from conftest import FIXTURES

INV = AgentRole.INVESTIGATOR
REV = AgentRole.REVIEWER
EXE = AgentRole.EXECUTOR


def msg(role, direction, content, **kw):
    return AgentMessage(role, direction, content, **kw)


def sample_transcript():
    return Transcript(
        [
            msg(INV, REQUEST, "look", image_ref="diagram.png"),
            msg(INV, RESPONSE, "blocks", token_cost=0.5, model="m1"),
            msg(EXE, REQUEST, "script"),
            msg(EXE, RESPONSE, "ok"),
            msg(REV, REQUEST, "review"),
            msg(REV, RESPONSE, "verdict"),
        ],
        {"task": "t"},
    )


def test_image_only_on_investigator_requests():
    with pytest.raises(ValueError):
        msg(REV, REQUEST, "x", image_ref="a.png")
    with pytest.raises(ValueError):
        msg(INV, RESPONSE, "x", image_ref="a.png")
    with pytest.raises(ValueError):
        msg(INV, "sideways", "x")
    with pytest.raises(ValueError):
        msg(INV, RESPONSE, "x", token_cost=-1)


def test_jsonl_round_trip():
    t = sample_transcript()
    text = t.to_jsonl()
    first = json.loads(text.splitlines()[0])
    assert first == {"type": "metadata", "task": "t"}
    back = Transcript.from_jsonl(text)
    assert back.messages == t.messages and back.metadata == t.metadata
    assert back.to_jsonl() == text


def test_exchanges_skip_local_runs():
    t = sample_transcript()
    assert [q.role for q, _ in t.exchanges()] == [INV, REV]
    assert len(t.exchanges(include_local=True)) == 3


def test_unpaired_messages():
    with pytest.raises(TransportError):
        Transcript([msg(INV, REQUEST, "a"), msg(INV, REQUEST, "b")]).exchanges()
    with pytest.raises(TransportError):
        Transcript([msg(INV, RESPONSE, "a")]).exchanges()
    with pytest.raises(TransportError):
        Transcript([msg(INV, REQUEST, "a")]).exchanges()
    with pytest.raises(TransportError):
        Transcript.from_jsonl("{not json\n")


def test_replay_in_order_and_strict():
    t = sample_transcript()
    rt = ReplayTransport(t)
    reply = rt.send(msg(INV, REQUEST, "look", image_ref="diagram.png"))
    assert reply.content == "blocks" and reply.token_cost is None
    with pytest.raises(ReplayMismatch):
        rt.send(msg(REV, REQUEST, "changed prompt"))
    assert rt.remaining == 1
    assert rt.send(msg(REV, REQUEST, "review")).content == "verdict"
    with pytest.raises(ReplayMismatch):
        rt.send(msg(REV, REQUEST, "review"))


def test_replay_role_mismatch_and_lenient():
    rt = ReplayTransport(sample_transcript(), strict=False)
    with pytest.raises(ReplayMismatch):
        rt.send(msg(REV, REQUEST, "review"))
    assert rt.send(msg(INV, REQUEST, "anything")).content == "blocks"


def test_scripted_transport():
    st = ScriptedTransport({"Investigator": ["a", "b"], REV: lambda m: m.content.upper()}, costs={INV: 0.1})
    assert st.send(msg(INV, REQUEST, "x")).content == "a"
    assert st.send(msg(INV, REQUEST, "x")).token_cost == 0.1
    assert st.send(msg(REV, REQUEST, "hi")).content == "HI"
    with pytest.raises(TransportError):
        st.send(msg(INV, REQUEST, "x"))
    with pytest.raises(TransportError):
        st.send(msg(AgentRole.BUILDER, REQUEST, "x"))


def test_shipped_transcript_is_well_formed():
    t = Transcript.read(FIXTURES / "bipolar_transcript.jsonl")
    pairs = t.exchanges(include_local=True)
    assert len(pairs) * 2 == len(t.messages)
    assert t.metadata["task_dir"] == "tasks/bipolar_transistor"


class _Handler(BaseHTTPRequestHandler):
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.seen.append((dict(self.headers), body))
        if body["model"] == "broken":
            payload = {"nothing": True}
        else:
            payload = {
                "model": body["model"],
                "choices": [{"message": {"content": f"echo:{self.headers['X-Simukit-Role']}"}}],
                "usage": {"total_tokens": 2000},
            }
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.seen = []
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_port}/v1/chat/completions"
    srv.shutdown()
    srv.server_close()


def test_http_round_trip(server, tmp_path):
    (tmp_path / "diagram.png").write_bytes(b"\x89PNG fake")
    tr = HTTPTransport(
        server,
        "base-model",
        api_key="k",
        price_per_1k_tokens=0.01,
        role_models={"UnitTestReviewer": "review-model"},
        image_root=str(tmp_path),
    )
    reply = tr.send(msg(INV, REQUEST, "look", image_ref="diagram.png"))
    assert reply.content == "echo:Investigator"
    assert reply.token_cost == pytest.approx(0.02)
    headers, body = _Handler.seen[0]
    assert headers["Authorization"] == "Bearer k"
    assert body["model"] == "base-model"
    parts = body["messages"][0]["content"]
    assert parts[0] == {"type": "text", "text": "look"}
    assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")
    tr.send(msg(REV, REQUEST, "review"))
    assert _Handler.seen[1][1]["model"] == "review-model"
    assert _Handler.seen[1][1]["messages"] == [{"role": "user", "content": "review"}]


def test_http_bad_reply(server):
    with pytest.raises(TransportError):
        HTTPTransport(server, "broken").send(msg(INV, REQUEST, "x"))


def test_http_unreachable():
    with pytest.raises(TransportError):
        HTTPTransport("http://127.0.0.1:9/none", "m", timeout=2).send(msg(INV, REQUEST, "x"))


def test_http_missing_image_degrades_to_text(tmp_path):
    tr = HTTPTransport("http://unused", "m", image_root=str(tmp_path))
    parts = tr.payload(msg(INV, REQUEST, "x", image_ref="nope.png"))["messages"][0]["content"]
    assert parts[1] == {"type": "text", "text": "[diagram: nope.png]"}
