"""Tool registry: activation filtering, invocation, and result discipline.

``invoke`` is total: every call produces exactly one ToolResult with the
call's id; failures become statuses (ok/error/timeout/invalid), never
exceptions crossing into the agent loop.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..budget import BoundedTimeout, run_bounded
from ..config import AgentConfig
from ..environment import EnvHandle
from ..gateway import ToolDeclaration
from .builtins import BUILTIN_TOOLKITS, ToolkitFactory
from .defs import InvokeContext, ToolCall, ToolDef, ToolResult, ToolTimeout, check_arguments


class UnknownToolkit(Exception):
    pass


class UnknownTool(Exception):
    pass


class BindingError(Exception):
    pass


@dataclass
class ToolRegistry:
    tools: dict[str, ToolDef] = field(default_factory=dict)
    env: EnvHandle | None = None
    tool_s: float = 30.0

    def declarations(self) -> tuple[ToolDeclaration, ...]:
        return tuple(self.tools[name].declaration() for name in sorted(self.tools))

    def get(self, name: str) -> ToolDef | None:
        return self.tools.get(name)


def build_registry(
    cfg: AgentConfig,
    env: EnvHandle | None,
    extra_factories: Mapping[str, ToolkitFactory] | None = None,
) -> ToolRegistry:
    """Instantiate exactly the activated tools of each configured toolkit."""
    factories: dict[str, ToolkitFactory] = dict(BUILTIN_TOOLKITS)
    if extra_factories:
        factories.update(extra_factories)

    registry = ToolRegistry(env=env, tool_s=cfg.timeouts.tool_s)
    owner: dict[str, str] = {}
    for tk_name, activation in cfg.toolkits.items():
        factory = factories.get(tk_name)
        if factory is None:
            raise UnknownToolkit(f"unknown toolkit '{tk_name}'")
        try:
            tools = factory(env, activation.config)
        except Exception as exc:
            raise BindingError(f"toolkit '{tk_name}' failed to construct: {exc}") from exc
        available = {t.name: t for t in tools}
        wanted = activation.activated_tools or tuple(available)  # empty = all tools
        for name in wanted:
            if name not in available:
                raise UnknownTool(f"toolkit '{tk_name}' has no tool '{name}'")
            if name in owner:
                raise BindingError(
                    f"tool '{name}' provided by both '{owner[name]}' and '{tk_name}'"
                )
            owner[name] = tk_name
            registry.tools[name] = available[name]
    return registry


def _parse_arguments(raw: Any) -> tuple[dict[str, Any] | None, str | None]:
    if isinstance(raw, Mapping):
        return dict(raw), None
    if raw is None or raw == "":
        return {}, None
    if isinstance(raw, str):
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError as exc:
            return None, f"malformed arguments: not valid JSON ({exc.msg})"
        if not isinstance(parsed, Mapping):
            return None, f"malformed arguments: expected an object, got {type(parsed).__name__}"
        return dict(parsed), None
    return None, f"malformed arguments: unsupported payload type {type(raw).__name__}"


def invoke(
    reg: ToolRegistry,
    call: ToolCall,
    budget: float,
    ctx: InvokeContext | None = None,
) -> ToolResult:
    """Validate and execute one tool call under min(budget, tool_s)."""
    clock = (ctx.clock if ctx and ctx.clock else time.monotonic)
    start = clock()

    def done(status: str, content: str) -> ToolResult:
        return ToolResult(
            id=call.id,
            status=status,
            content=content,
            wall_time_ms=int((clock() - start) * 1000),
        )

    tool = reg.get(call.tool_name)
    if tool is None:
        return done("invalid", f"unknown tool: {call.tool_name}")

    args, parse_error = _parse_arguments(call.arguments)
    if parse_error:
        return done("invalid", parse_error)
    schema_error = check_arguments(tool.parameters, args)
    if schema_error:
        return done("invalid", f"arguments do not match schema: {schema_error}")

    effective = min(budget, reg.tool_s)
    if effective <= 0:
        return done("timeout", "tool budget exhausted before execution")

    run_ctx = ctx or InvokeContext()
    run_ctx.env = run_ctx.env or reg.env
    run_ctx.budget_s = effective
    if run_ctx.clock is None:
        run_ctx.clock = clock

    try:
        if tool.source == "builtin_env":
            # the environment enforces the timeout itself (process kill)
            content = tool.binding(args, run_ctx)
        else:
            content = run_bounded(lambda: tool.binding(args, run_ctx), effective)
        return done("ok", str(content))
    except (BoundedTimeout, ToolTimeout) as exc:
        return done("timeout", str(exc) or f"tool exceeded {effective:.1f}s budget")
    except Exception as exc:
        return done("error", f"{type(exc).__name__}: {exc}")
