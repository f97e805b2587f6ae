"""Single egress point for model traffic.

One chat-completion client (OpenAI-compatible dialect) with tool calling,
retries and token accounting, plus deterministic scripted / replay / record
transports so every pipeline in the repo can run bit-identically offline.
"""
from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import httpx

RETRYABLE_STATUS = {429, 500, 502, 503, 504}
BACKOFF_S = (0.5, 1.0, 2.0)


class TransportError(Exception):
    """Network failure after exhausting retries."""


class ProtocolError(Exception):
    """Response body does not parse as a chat completion."""


class ScriptExhausted(Exception):
    """A scripted transport ran out of canned responses."""


def count_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(utf-8 bytes / 4).

    A budget signal for context management, not a real tokenizer; error vs.
    typical BPE is within about +/-30%.
    """
    n = len(text.encode("utf-8"))
    return (n + 3) // 4


@dataclass(frozen=True)
class ToolCallRecord:
    id: str
    name: str
    arguments: str  # raw argument text as emitted by the model


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant | tool
    content: str = ""
    tool_calls: tuple[ToolCallRecord, ...] = ()
    tool_call_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.tool_calls:
            d["tool_calls"] = [
                {
                    "id": c.id,
                    "type": "function",
                    "function": {"name": c.name, "arguments": c.arguments},
                }
                for c in self.tool_calls
            ]
        if self.tool_call_id is not None:
            d["tool_call_id"] = self.tool_call_id
        return d


@dataclass(frozen=True)
class ToolDeclaration:
    name: str
    description: str
    parameters: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters,
            },
        }


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    tools: tuple[ToolDeclaration, ...] = ()
    temperature: float = 0.7
    max_tokens: int = 4096

    def validate(self) -> None:
        for i, msg in enumerate(self.messages):
            if msg.role == "system" and i != 0:
                raise ValueError("system message only allowed at index 0")
        call_ids = {c.id for m in self.messages for c in m.tool_calls}
        for msg in self.messages:
            if msg.role == "tool" and msg.tool_call_id not in call_ids:
                raise ValueError(f"tool message references unknown call id {msg.tool_call_id!r}")

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [m.to_dict() for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.tools:
            payload["tools"] = [t.to_dict() for t in self.tools]
        return payload


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    estimated: bool = False  # True when counters come from the bytes/4 heuristic


@dataclass(frozen=True)
class ChatResponse:
    content: str | None = None
    tool_calls: tuple[ToolCallRecord, ...] = ()
    usage: Usage = field(default_factory=Usage)
    finish_reason: str = "stop"  # stop | tool_calls | length | error

    def to_dict(self) -> dict[str, Any]:
        return {
            "content": self.content,
            "tool_calls": [
                {"id": c.id, "name": c.name, "arguments": c.arguments} for c in self.tool_calls
            ],
            "usage": {
                "prompt_tokens": self.usage.prompt_tokens,
                "completion_tokens": self.usage.completion_tokens,
                "estimated": self.usage.estimated,
            },
            "finish_reason": self.finish_reason,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChatResponse":
        usage = d.get("usage") or {}
        return cls(
            content=d.get("content"),
            tool_calls=tuple(
                ToolCallRecord(c["id"], c["name"], c["arguments"]) for c in d.get("tool_calls", [])
            ),
            usage=Usage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                estimated=bool(usage.get("estimated", False)),
            ),
            finish_reason=d.get("finish_reason", "stop"),
        )


def request_fingerprint(req: ChatRequest) -> str:
    """Hash over every output-affecting field (never credentials)."""
    basis = {
        "model": req.model,
        "messages": [m.to_dict() for m in req.messages],
        "tool_names": [t.name for t in req.tools],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    blob = json.dumps(basis, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _estimate_usage(req: ChatRequest, resp: ChatResponse) -> Usage:
    prompt = sum(count_tokens(m.content) for m in req.messages)
    completion = count_tokens(resp.content or "") + sum(
        count_tokens(c.arguments) for c in resp.tool_calls
    )
    return Usage(prompt_tokens=prompt, completion_tokens=completion, estimated=True)


class Transport:
    """Interface: one request in, exactly one response out."""

    kind = "abstract"

    def send(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class ScriptedTransport(Transport):
    """Serves canned responses in FIFO order; records the requests it saw.

    ``latency_s`` simulates gateway latency (slept after the response is
    claimed, outside the lock); a sequence gives per-response latencies.
    Tests should call ``assert_exhausted`` so unconsumed responses fail
    loudly.
    """

    kind = "scripted"

    def __init__(
        self,
        responses: Iterable[ChatResponse],
        latency_s: float | Sequence[float] = 0.0,
    ) -> None:
        self._responses = list(responses)
        self._lock = threading.Lock()
        self.latency_s = latency_s
        self._sends = 0
        self.requests: list[ChatRequest] = []

    def _latency_for(self, index: int) -> float:
        if isinstance(self.latency_s, (int, float)):
            return float(self.latency_s)
        return self.latency_s[index] if index < len(self.latency_s) else 0.0

    def send(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            if not self._responses:
                raise ScriptExhausted("scripted transport has no responses left")
            self.requests.append(req)
            resp = self._responses.pop(0)
            index = self._sends
            self._sends += 1
        latency = self._latency_for(index)
        if latency > 0:
            time.sleep(latency)
        return resp

    @property
    def remaining(self) -> int:
        with self._lock:
            return len(self._responses)

    def assert_exhausted(self) -> None:
        if self.remaining:
            raise AssertionError(f"{self.remaining} scripted responses were never consumed")

    def __enter__(self) -> "ScriptedTransport":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.assert_exhausted()


class ReplayTransport(Transport):
    """Replays a recorded cassette keyed by request fingerprint.

    Records with the same fingerprint replay in recorded order.
    """

    kind = "replay"

    def __init__(self, cassette_path: str) -> None:
        self._lock = threading.Lock()
        self._by_fp: dict[str, list[ChatResponse]] = {}
        with open(cassette_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._by_fp.setdefault(record["fingerprint"], []).append(
                    ChatResponse.from_dict(record["response"])
                )

    def send(self, req: ChatRequest) -> ChatResponse:
        fp = request_fingerprint(req)
        with self._lock:
            queue = self._by_fp.get(fp)
            if not queue:
                raise ScriptExhausted(f"cassette has no response for fingerprint {fp[:12]}")
            return queue.pop(0)


class RecordTransport(Transport):
    """Wraps another transport and appends every exchange to a cassette."""

    kind = "record"

    def __init__(self, inner: Transport, cassette_path: str) -> None:
        self._inner = inner
        self._path = cassette_path
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> ChatResponse:
        resp = self._inner.send(req)
        record = {
            "fingerprint": request_fingerprint(req),
            "request": req.to_payload(),
            "response": resp.to_dict(),
            "timestamp": time.time(),
        }
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return resp


class HttpTransport(Transport):
    """OpenAI-compatible chat-completions client over HTTP."""

    kind = "http"

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        max_inflight: int = 64,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key
        self._sleep = sleep
        self._client = client or httpx.Client(
            timeout=httpx.Timeout(120.0, connect=10.0),
            limits=httpx.Limits(max_connections=max_inflight),
        )

    def send(self, req: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        for attempt in range(len(BACKOFF_S) + 1):
            try:
                http_resp = self._client.post(url, json=req.to_payload(), headers=headers)
            except (httpx.ConnectError, httpx.ConnectTimeout, httpx.ReadTimeout) as exc:
                last_error = exc
            else:
                if http_resp.status_code in RETRYABLE_STATUS:
                    last_error = TransportError(f"HTTP {http_resp.status_code}")
                elif http_resp.status_code >= 400:
                    raise TransportError(
                        f"HTTP {http_resp.status_code}: {http_resp.text[:200]}"
                    )
                else:
                    return _parse_completion(http_resp)
            if attempt < len(BACKOFF_S):
                # full jitter: uniform in [0, base]
                self._sleep(random.uniform(0, BACKOFF_S[attempt]))
        raise TransportError(f"exhausted retries: {last_error}")


def _parse_completion(http_resp: httpx.Response) -> ChatResponse:
    try:
        body = http_resp.json()
        choice = body["choices"][0]
        message = choice["message"]
    except (ValueError, KeyError, IndexError) as exc:
        raise ProtocolError(f"unparsable completion body: {exc}") from exc
    calls = tuple(
        ToolCallRecord(
            id=c.get("id", f"call_{i}"),
            name=c["function"]["name"],
            arguments=c["function"].get("arguments", "{}"),
        )
        for i, c in enumerate(message.get("tool_calls") or [])
    )
    usage_raw = body.get("usage") or {}
    usage = Usage(
        prompt_tokens=int(usage_raw.get("prompt_tokens", 0)),
        completion_tokens=int(usage_raw.get("completion_tokens", 0)),
        estimated=not usage_raw,
    )
    finish = choice.get("finish_reason") or ("tool_calls" if calls else "stop")
    return ChatResponse(
        content=message.get("content"),
        tool_calls=calls,
        usage=usage,
        finish_reason=finish,
    )


def complete(req: ChatRequest, transport: Transport) -> ChatResponse:
    """Send one request through a transport; usage is estimated if absent."""
    req.validate()
    resp = transport.send(req)
    if resp.finish_reason == "tool_calls" and not resp.tool_calls:
        raise ProtocolError("finish_reason=tool_calls with empty tool_calls")
    if resp.usage.prompt_tokens == 0 and resp.usage.completion_tokens == 0:
        resp = ChatResponse(
            content=resp.content,
            tool_calls=resp.tool_calls,
            usage=_estimate_usage(req, resp),
            finish_reason=resp.finish_reason,
        )
    return resp


def transport_from_env(env: dict[str, str] | None = None) -> HttpTransport:
    """Build an HTTP transport from LLM_BASE_URL / LLM_API_KEY."""
    env = env if env is not None else dict(os.environ)
    base_url = env.get("LLM_BASE_URL")
    if not base_url:
        raise TransportError("LLM_BASE_URL is not set")
    return HttpTransport(base_url=base_url, api_key=env.get("LLM_API_KEY", ""))


def default_model(env: dict[str, str] | None = None) -> str:
    env = env if env is not None else dict(os.environ)
    return env.get("LLM_MODEL", "scripted-model")


def scripted_text(text: str, **kwargs: Any) -> ChatResponse:
    """Convenience for tests and canned sessions: a plain text answer."""
    return ChatResponse(content=text, finish_reason="stop", **kwargs)


def scripted_tool_call(
    name: str, arguments: dict[str, Any] | str, call_id: str = "call_0"
) -> ChatResponse:
    """Convenience: a single-tool-call response."""
    args_text = arguments if isinstance(arguments, str) else json.dumps(arguments)
    return ChatResponse(
        content=None,
        tool_calls=(ToolCallRecord(call_id, name, args_text),),
        finish_reason="tool_calls",
    )


def scripted_tool_calls(calls: Sequence[tuple[str, str, dict[str, Any] | str]]) -> ChatResponse:
    """Convenience: a multi-tool-call response from (id, name, args) triples."""
    records = tuple(
        ToolCallRecord(cid, name, args if isinstance(args, str) else json.dumps(args))
        for cid, name, args in calls
    )
    return ChatResponse(content=None, tool_calls=records, finish_reason="tool_calls")
