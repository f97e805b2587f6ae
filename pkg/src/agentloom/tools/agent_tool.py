"""Agent-as-tool: a sub-agent episode wrapped behind a tool interface."""
from __future__ import annotations

from typing import Any

from ..config import AgentConfig
from .defs import InvokeContext, ToolDef, ToolTimeout, object_schema
from .registry import BindingError

MAX_AGENT_DEPTH = 3


def agent_as_tool(sub_cfg: AgentConfig, name: str, description: str) -> ToolDef:
    """Wrap ``sub_cfg`` as a tool that runs one nested episode per call.

    The sub-episode inherits the caller's transport and may not outlive the
    caller's remaining episode budget.  Nesting deeper than
    ``MAX_AGENT_DEPTH`` raises BindingError.
    """

    def binding(args: dict[str, Any], ctx: InvokeContext) -> str:
        from ..runtime import RuntimeDeps, run_episode  # circular at import time

        depth = ctx.depth + 1
        if depth > MAX_AGENT_DEPTH:
            raise BindingError(
                f"agent-as-tool nesting depth {depth} exceeds cap {MAX_AGENT_DEPTH}"
            )
        cfg = sub_cfg
        if ctx.episode_deadline is not None:
            remaining = max(ctx.episode_deadline.remaining(), 0.0)
            if remaining <= 0:
                raise ToolTimeout("caller's episode budget is exhausted")
            if remaining < cfg.timeouts.episode_s:
                import dataclasses

                cfg = dataclasses.replace(
                    cfg,
                    timeouts=dataclasses.replace(
                        cfg.timeouts,
                        episode_s=remaining,
                        step_s=min(cfg.timeouts.step_s, remaining),
                        tool_s=min(cfg.timeouts.tool_s, remaining),
                    ),
                )
        deps = RuntimeDeps(transport=ctx.transport, depth=depth, clock=ctx.clock)
        trajectory = run_episode(cfg, args["task"], deps)
        if trajectory.termination == "answered":
            return trajectory.final_answer or ""
        if trajectory.termination == "episode_timeout":
            raise ToolTimeout(f"sub-agent '{name}' timed out")
        raise RuntimeError(f"sub-agent '{name}' ended with {trajectory.termination}")

    return ToolDef(
        name=name,
        description=description,
        parameters=object_schema({"task": {"type": "string"}}),
        source="agent",
        binding=binding,
        toolkit=f"agent:{sub_cfg.name}",
    )
