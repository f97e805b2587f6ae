"""Minimal remote tool server for tests and demos: one echo tool.

Run with ``python -m agentloom.tools.stub_server``.  Speaks the same
newline-delimited JSON-RPC dialect as the client in ``remote.py``.
"""
from __future__ import annotations

import json
import sys

ECHO_TOOL = {
    "name": "echo",
    "description": "Echo the provided text back.",
    "inputSchema": {
        "type": "object",
        "properties": {"text": {"type": "string"}},
        "required": ["text"],
    },
}


def serve(stdin=sys.stdin, stdout=sys.stdout) -> None:
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        method = msg.get("method")
        if "id" not in msg:
            continue  # notification
        if method == "initialize":
            result = {"protocolVersion": msg["params"].get("protocolVersion", ""),
                      "serverInfo": {"name": "stub"}}
        elif method == "tools/list":
            result = {"tools": [ECHO_TOOL]}
        elif method == "tools/call":
            params = msg.get("params", {})
            if params.get("name") != "echo":
                _reply(stdout, msg["id"], error={"code": -32601, "message": "unknown tool"})
                continue
            text = params.get("arguments", {}).get("text", "")
            result = {"content": [{"type": "text", "text": text}], "isError": False}
        else:
            _reply(stdout, msg["id"], error={"code": -32601, "message": f"no method {method}"})
            continue
        _reply(stdout, msg["id"], result=result)


def _reply(stdout, req_id, result=None, error=None) -> None:
    payload = {"jsonrpc": "2.0", "id": req_id}
    if error is not None:
        payload["error"] = error
    else:
        payload["result"] = result
    stdout.write(json.dumps(payload) + "\n")
    stdout.flush()


if __name__ == "__main__":
    serve()
