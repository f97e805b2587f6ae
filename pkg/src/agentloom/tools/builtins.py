"""Builtin toolkits.

Each toolkit is a factory ``(env, config) -> list[ToolDef]``.  Network-facing
toolkits (search, arxiv) default to an offline fixture mode so every test and
demo runs hermetically; HTTP mode is opt-in per toolkit config.
"""
from __future__ import annotations

import ast
import datetime
import json
import operator
import time
from pathlib import Path
from typing import Any, Callable, Mapping

import httpx

from ..environment import TIMEOUT_EXIT, EnvHandle
from .defs import InvokeContext, ToolDef, ToolTimeout, object_schema

ToolkitFactory = Callable[[EnvHandle | None, Mapping[str, Any]], list[ToolDef]]


def _fetcher(config: Mapping[str, Any]) -> Callable[[str], str]:
    """Pluggable HTTP fetcher: fixture map by default, live GET when asked."""
    fixtures = dict(config.get("fixtures", {}))
    if isinstance(config.get("fixtures"), str):
        fixtures = json.loads(Path(config["fixtures"]).read_text(encoding="utf-8"))
    if config.get("mode", "fixture") == "http":

        def fetch(url: str) -> str:
            resp = httpx.get(url, timeout=20.0, follow_redirects=True)
            resp.raise_for_status()
            return resp.text[: 64 * 1024]

        return fetch

    def lookup(key: str) -> str:
        if key in fixtures:
            return str(fixtures[key])
        return f"offline fixture mode: no fixture for {key!r}"

    return lookup


def search_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    fetch = _fetcher(config)

    def search(args: dict[str, Any], ctx: InvokeContext) -> str:
        return fetch(args["query"])

    def web_qa(args: dict[str, Any], ctx: InvokeContext) -> str:
        page = fetch(args["url"])
        return f"question: {args['question']}\ncontent:\n{page}"

    return [
        ToolDef(
            name="search",
            description="Search the web and return a snippet list for the query.",
            parameters=object_schema({"query": {"type": "string"}}),
            source="builtin_pure",
            binding=search,
            toolkit="search",
        ),
        ToolDef(
            name="web_qa",
            description="Fetch a page and answer a question against its content.",
            parameters=object_schema(
                {"url": {"type": "string"}, "question": {"type": "string"}}
            ),
            source="builtin_pure",
            binding=web_qa,
            toolkit="search",
        ),
    ]


def arxiv_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    fetch = _fetcher(config)

    def download_papers(args: dict[str, Any], ctx: InvokeContext) -> str:
        return fetch(f"arxiv:{args['query']}")

    return [
        ToolDef(
            name="download_papers",
            description="Download paper PDFs matching a query and return their local paths.",
            parameters=object_schema(
                {"query": {"type": "string"}, "max_results": {"type": "integer", "minimum": 1}},
                required=["query"],
            ),
            source="builtin_pure",
            binding=download_papers,
            toolkit="arxiv",
        )
    ]


def python_executor_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    def execute_python_code(args: dict[str, Any], ctx: InvokeContext) -> str:
        result = ctx.env.exec_code(args["code"], timeout_s=ctx.budget_s)
        if result.exit_code == TIMEOUT_EXIT:
            raise ToolTimeout(result.render())
        return result.render()

    return [
        ToolDef(
            name="execute_python_code",
            description="Run a Python snippet in the sandbox and return its output.",
            parameters=object_schema({"code": {"type": "string"}}),
            source="builtin_env",
            binding=execute_python_code,
            toolkit="python_executor",
        )
    ]


def shell_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    def run_command(args: dict[str, Any], ctx: InvokeContext) -> str:
        result = ctx.env.exec_command(args["command"], timeout_s=ctx.budget_s)
        if result.exit_code == TIMEOUT_EXIT:
            raise ToolTimeout(result.render())
        return result.render()

    return [
        ToolDef(
            name="run_command",
            description="Run a shell command in the session working directory.",
            parameters=object_schema({"command": {"type": "string"}}),
            source="builtin_env",
            binding=run_command,
            toolkit="shell",
        )
    ]


def _scratch_path(ctx: InvokeContext, raw: str) -> Path:
    scratch = Path(ctx.env.scratch_dir)
    path = (scratch / raw).resolve()
    if not str(path).startswith(str(scratch.resolve())):
        raise ValueError(f"path escapes the session directory: {raw}")
    return path


def file_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    def read_file(args: dict[str, Any], ctx: InvokeContext) -> str:
        return _scratch_path(ctx, args["path"]).read_text(encoding="utf-8")

    def write_file(args: dict[str, Any], ctx: InvokeContext) -> str:
        path = _scratch_path(ctx, args["path"])
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(args["content"], encoding="utf-8")
        return f"wrote {len(args['content'])} chars to {args['path']}"

    return [
        ToolDef(
            name="read_file",
            description="Read a text file from the session directory.",
            parameters=object_schema({"path": {"type": "string"}}),
            source="builtin_env",
            binding=read_file,
            toolkit="file",
        ),
        ToolDef(
            name="write_file",
            description="Write a text file inside the session directory.",
            parameters=object_schema({"path": {"type": "string"}, "content": {"type": "string"}}),
            source="builtin_env",
            binding=write_file,
            toolkit="file",
        ),
    ]


def time_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    def current_time(args: dict[str, Any], ctx: InvokeContext) -> str:
        wall = ctx.extra.get("wall_clock", time.time)
        return datetime.datetime.fromtimestamp(wall(), tz=datetime.timezone.utc).isoformat()

    return [
        ToolDef(
            name="current_time",
            description="Current UTC time in ISO-8601 form.",
            parameters=object_schema({}),
            source="builtin_pure",
            binding=current_time,
            toolkit="time",
        )
    ]


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _eval_node(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval_node(node.operand))
    raise ValueError(f"unsupported expression element: {ast.dump(node)[:60]}")


def math_eval_toolkit(env: EnvHandle | None, config: Mapping[str, Any]) -> list[ToolDef]:
    def evaluate(args: dict[str, Any], ctx: InvokeContext) -> str:
        value = _eval_node(ast.parse(args["expression"], mode="eval"))
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        return str(value)

    return [
        ToolDef(
            name="evaluate",
            description="Evaluate an arithmetic expression (+, -, *, /, //, %, **).",
            parameters=object_schema({"expression": {"type": "string"}}),
            source="builtin_pure",
            binding=evaluate,
            toolkit="math_eval",
        )
    ]


BUILTIN_TOOLKITS: dict[str, ToolkitFactory] = {
    "search": search_toolkit,
    "arxiv": arxiv_toolkit,
    "python_executor": python_executor_toolkit,
    "shell": shell_toolkit,
    "file": file_toolkit,
    "time": time_toolkit,
    "math_eval": math_eval_toolkit,
}


def builtin_tool_names() -> dict[str, frozenset[str]]:
    """Toolkit name -> tool names, computed without touching an environment."""
    out: dict[str, frozenset[str]] = {}
    for name, factory in BUILTIN_TOOLKITS.items():
        out[name] = frozenset(t.name for t in factory(None, {}))
    return out
