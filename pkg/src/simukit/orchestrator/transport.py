"""Agent messages, transcripts and the transports that carry them."""

from __future__ import annotations

import base64
import json
import mimetypes
import os
import threading
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Protocol

from ..errors import ReplayMismatch, TransportError
from .prompts import AgentRole

REQUEST = "request"
RESPONSE = "response"


@dataclass(frozen=True)
class AgentMessage:
    role: AgentRole
    direction: str
    content: str
    image_ref: str | None = None
    timestamp: float = 0.0
    token_cost: float | None = None
    model: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", AgentRole(self.role))
        if self.direction not in (REQUEST, RESPONSE):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.image_ref is not None and not (
            self.role is AgentRole.INVESTIGATOR and self.direction == REQUEST
        ):
            raise ValueError("only Investigator requests may carry an image")
        if self.token_cost is not None and self.token_cost < 0:
            raise ValueError("negative token cost")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["role"] = self.role.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> AgentMessage:
        keys = ("role", "direction", "content", "image_ref", "timestamp", "token_cost", "model")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass
class Transcript:
    messages: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, message: AgentMessage) -> None:
        self.messages.append(message)

    def exchanges(self, include_local: bool = False) -> list[tuple[AgentMessage, AgentMessage]]:
        """Request/response pairs in order; executor runs are local, not transported."""
        out = []
        pending = None
        for msg in self.messages:
            if msg.direction == REQUEST:
                if pending is not None:
                    raise TransportError(f"{pending.role.value} request has no response")
                pending = msg
            else:
                if pending is None or pending.role is not msg.role:
                    raise TransportError(f"unexpected {msg.role.value} response")
                if include_local or msg.role is not AgentRole.EXECUTOR:
                    out.append((pending, msg))
                pending = None
        if pending is not None:
            raise TransportError(f"{pending.role.value} request has no response")
        return out

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "metadata", **self.metadata}, sort_keys=True)]
        for msg in self.messages:
            lines.append(json.dumps({"type": "message", **msg.to_dict()}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> Transcript:
        out = cls()
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise TransportError(f"transcript line {n}: {exc}") from None
            kind = rec.pop("type", "message")
            if kind == "metadata":
                out.metadata.update(rec)
            else:
                out.append(AgentMessage.from_dict(rec))
        return out

    @classmethod
    def read(cls, path) -> Transcript:
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


class Transport(Protocol):
    def send(self, request: AgentMessage) -> AgentMessage: ...


class ReplayTransport:
    """Answers requests from a recorded transcript, in order.

    With ``strict`` the request text must match the recording byte for byte,
    so any drift in prompts or parsing is caught.
    """

    def __init__(self, transcript: Transcript, strict: bool = True) -> None:
        self._pairs = transcript.exchanges()
        self._cursor = 0
        self._lock = threading.Lock()
        self.strict = strict

    @property
    def remaining(self) -> int:
        return len(self._pairs) - self._cursor

    def send(self, request: AgentMessage) -> AgentMessage:
        with self._lock:
            if self._cursor >= len(self._pairs):
                raise ReplayMismatch(f"transcript exhausted at a {request.role.value} request")
            recorded, response = self._pairs[self._cursor]
            if recorded.role is not request.role:
                raise ReplayMismatch(
                    f"exchange {self._cursor + 1}: expected a {recorded.role.value} request, "
                    f"got {request.role.value}"
                )
            if self.strict and recorded.content != request.content:
                raise ReplayMismatch(f"exchange {self._cursor + 1}: {request.role.value} prompt differs")
            self._cursor += 1
        return replace(response, token_cost=None)


Responder = Callable[[AgentMessage], str]


class ScriptedTransport:
    """Canned replies per role: a list consumed in order, or a callable."""

    def __init__(self, replies: dict, costs: dict | None = None) -> None:
        self._replies = {AgentRole(k): (v if callable(v) else list(v)) for k, v in replies.items()}
        self._costs = {AgentRole(k): v for k, v in (costs or {}).items()}
        self._lock = threading.Lock()

    def send(self, request: AgentMessage) -> AgentMessage:
        with self._lock:
            source = self._replies.get(request.role)
            if source is None:
                raise TransportError(f"no scripted replies for {request.role.value}")
            if callable(source):
                text = source(request)
            elif source:
                text = source.pop(0)
            else:
                raise TransportError(f"scripted replies for {request.role.value} are used up")
        return AgentMessage(request.role, RESPONSE, text, token_cost=self._costs.get(request.role))


class HTTPTransport:
    """Chat-completions style JSON endpoint.

    The request body is ``{"model", "messages"}``; the agent role travels in
    the ``X-Simukit-Role`` header. The reply must carry
    ``choices[0].message.content`` and may carry ``usage.total_tokens``.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 300.0,
        price_per_1k_tokens: float = 0.0,
        role_models: dict | None = None,
        image_root: str | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.price_per_1k_tokens = price_per_1k_tokens
        self.role_models = {AgentRole(k): v for k, v in (role_models or {}).items()}
        self.image_root = image_root

    def _image_part(self, ref: str) -> dict:
        path = ref if os.path.isabs(ref) or self.image_root is None else os.path.join(self.image_root, ref)
        if not os.path.isfile(path):
            return {"type": "text", "text": f"[diagram: {ref}]"}
        mime = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as fh:
            data = base64.b64encode(fh.read()).decode("ascii")
        return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}

    def payload(self, request: AgentMessage) -> dict:
        model = request.model or self.role_models.get(request.role, self.model)
        content = request.content
        if request.image_ref:
            content = [{"type": "text", "text": request.content}, self._image_part(request.image_ref)]
        return {"model": model, "messages": [{"role": "user", "content": content}]}

    def send(self, request: AgentMessage) -> AgentMessage:
        body = json.dumps(self.payload(request)).encode("utf-8")
        headers = {"Content-Type": "application/json", "X-Simukit-Role": request.role.value}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TransportError(f"{request.role.value} request failed: {exc}") from None
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("endpoint reply lacks choices[0].message.content") from None
        tokens = (data.get("usage") or {}).get("total_tokens") or 0
        cost = tokens / 1000.0 * self.price_per_1k_tokens
        return AgentMessage(request.role, RESPONSE, text, token_cost=cost, model=data.get("model"))
