"""Remote tool servers over child-process pipes.

Speaks newline-delimited JSON-RPC 2.0: ``initialize`` handshake, then
``tools/list`` for discovery and ``tools/call`` for invocation.  Only these
three methods are supported; resources/prompts endpoints are out of scope.
"""
from __future__ import annotations

import json
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Sequence

from .defs import InvokeContext, ToolDef

HANDSHAKE_TIMEOUT_S = 10.0
PROTOCOL_VERSION = "2025-03-26"


class HandshakeError(Exception):
    pass


class RemoteError(Exception):
    pass


@dataclass(frozen=True)
class RemoteSpec:
    command: Sequence[str]
    name: str = "remote"
    handshake_timeout_s: float = HANDSHAKE_TIMEOUT_S


@dataclass
class RemoteClient:
    spec: RemoteSpec
    _proc: subprocess.Popen | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _next_id: int = 1

    def start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                list(self.spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise HandshakeError(f"cannot start remote server: {exc}") from exc
        result = self._request(
            "initialize",
            {"protocolVersion": PROTOCOL_VERSION, "clientInfo": {"name": "agentloom"}},
            timeout_s=self.spec.handshake_timeout_s,
            handshake=True,
        )
        if not isinstance(result, dict):
            raise HandshakeError(f"bad initialize result: {result!r}")
        self._notify("notifications/initialized")

    def _send(self, payload: dict[str, Any]) -> None:
        assert self._proc and self._proc.stdin
        self._proc.stdin.write(json.dumps(payload) + "\n")
        self._proc.stdin.flush()

    def _notify(self, method: str) -> None:
        self._send({"jsonrpc": "2.0", "method": method})

    def _request(
        self, method: str, params: dict[str, Any], timeout_s: float, handshake: bool = False
    ) -> Any:
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            self._send({"jsonrpc": "2.0", "id": req_id, "method": method, "params": params})
            line = _read_line(self._proc, timeout_s)
        if line is None:
            self.close()
            if handshake:
                raise HandshakeError(
                    f"server did not reply to {method} within {timeout_s:.0f}s"
                )
            raise RemoteError(f"server did not reply to {method} within {timeout_s:.0f}s")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            err = HandshakeError if handshake else RemoteError
            raise err(f"unparsable server reply: {line[:120]}") from exc
        if msg.get("error"):
            err = HandshakeError if handshake else RemoteError
            raise err(f"{method} failed: {msg['error'].get('message', msg['error'])}")
        return msg.get("result")

    def list_tools(self) -> list[dict[str, Any]]:
        result = self._request("tools/list", {}, timeout_s=self.spec.handshake_timeout_s)
        return list(result.get("tools", []))

    def call_tool(self, name: str, arguments: dict[str, Any], timeout_s: float) -> str:
        result = self._request(
            "tools/call", {"name": name, "arguments": arguments}, timeout_s=timeout_s
        )
        content = result.get("content", [])
        texts = [c.get("text", "") for c in content if c.get("type") == "text"]
        if result.get("isError"):
            raise RemoteError("\n".join(texts) or "remote tool reported an error")
        return "\n".join(texts)

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=2)
        except Exception:
            self._proc.kill()
        self._proc = None


def _read_line(proc: subprocess.Popen, timeout_s: float) -> str | None:
    """Read one stdout line with a timeout; None when the server stays silent."""
    box: dict[str, str] = {}
    done = threading.Event()

    def reader() -> None:
        line = proc.stdout.readline()
        if line:
            box["line"] = line
        done.set()

    thread = threading.Thread(target=reader, daemon=True)
    thread.start()
    if not done.wait(timeout_s):
        return None
    return box.get("line")


def connect_remote_toolkit(endpoint: RemoteSpec) -> list[ToolDef]:
    """Handshake with a remote server and wrap each of its tools as a ToolDef."""
    client = RemoteClient(endpoint)
    client.start()
    defs: list[ToolDef] = []
    for spec in client.list_tools():
        name = spec["name"]

        def binding(args: dict[str, Any], ctx: InvokeContext, _name: str = name) -> str:
            return client.call_tool(_name, args, timeout_s=ctx.budget_s)

        defs.append(
            ToolDef(
                name=name,
                description=spec.get("description", ""),
                parameters=spec.get("inputSchema", {"type": "object", "properties": {}}),
                source="remote_protocol",
                binding=binding,
                toolkit=endpoint.name,
            )
        )
    return defs
