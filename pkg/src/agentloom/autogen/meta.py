"""Meta-agent generation: an architect agent whose tools ARE the generator.

The agent runs through the ordinary episode loop with a registry containing
exactly four tools: search_tool, create_tool, ask_user, create_agent_config.
ask_user suspends the episode until the dialogue session supplies an answer;
an invalid config submission is fed back as a tool error for self-repair.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from ..config import (
    AgentConfig,
    ConfigError,
    CtxSpec,
    EnvSpec,
    SamplingParams,
    TimeoutSpec,
    emit_config,
    parse_config,
    validate_config,
)
from ..environment import EnvHandle
from ..gateway import Transport
from ..prompts import load_prompt
from ..registries import default_registry_snapshot
from ..runtime import RuntimeDeps, run_episode
from ..tools.defs import ToolDef, object_schema
from ..tools.registry import ToolRegistry
from .library import ToolLibrary, search_tools
from .synthesis import SynthesisFailed, synthesize_tool
from .workflow import GenerationError, GenerationReport

META_MAX_TURNS = 24
META_TOOL_NAMES = ("ask_user", "create_agent_config", "create_tool", "search_tool")
ANSWER_WAIT_S = 600.0


@dataclass
class DialogueSession:
    """Answer channel between a running meta-agent and a human (or script).

    Pre-seeded ``answers`` make a session fully scripted; otherwise ``ask``
    blocks until ``provide_answer`` is called from another thread.
    """

    answers: list[str] = field(default_factory=list)
    on_event: Callable[[dict[str, Any]], None] | None = None
    answer_wait_s: float = ANSWER_WAIT_S
    _queue: "queue.Queue[str]" = field(default_factory=queue.Queue)
    _awaiting: threading.Event = field(default_factory=threading.Event)
    pending_question: str | None = None

    def __post_init__(self) -> None:
        for answer in self.answers:
            self._queue.put(answer)

    @property
    def awaiting_user(self) -> bool:
        return self._awaiting.is_set()

    def emit(self, event: dict[str, Any]) -> None:
        if self.on_event is not None:
            self.on_event(event)

    def ask(self, question: str) -> str:
        self.pending_question = question
        self._awaiting.set()
        self.emit({"type": "ask_user", "question": question})
        try:
            return self._queue.get(timeout=self.answer_wait_s)
        finally:
            self._awaiting.clear()
            self.pending_question = None

    def provide_answer(self, text: str) -> None:
        self._queue.put(text)


def meta_agent_config(max_turns: int = META_MAX_TURNS) -> AgentConfig:
    return AgentConfig(
        name="architect",
        instructions=load_prompt("meta_agent_v1"),
        env=EnvSpec(name="mock"),
        context_manager=CtxSpec(),
        sampling=SamplingParams(temperature=0.3, max_turns=max_turns, max_tokens=4096),
        # generous budgets: ask_user legitimately waits on a human
        timeouts=TimeoutSpec(tool_s=600.0, step_s=900.0, episode_s=3600.0),
    )


def _meta_tools(
    session: DialogueSession,
    lib: ToolLibrary,
    gw: Transport,
    sandbox: EnvHandle,
    model: str,
    accepted: dict[str, Any],
    report: GenerationReport,
) -> list[ToolDef]:
    def search_tool_binding(args: dict[str, Any], ctx) -> str:
        hits = search_tools(lib, args["query"], k=int(args.get("k", 5)))
        report.retrieved.setdefault(args["query"], []).extend(t.name for t in hits)
        if not hits:
            return "no matching tools in the library"
        return "\n".join(f"{t.name} [{t.toolkit}]: {t.description}" for t in hits)

    def create_tool_binding(args: dict[str, Any], ctx) -> str:
        try:
            synth = synthesize_tool(
                args["need"], lib, gw, sandbox, model=model, created_by="meta_agent"
            )
        except SynthesisFailed as exc:
            if exc.record is not None:
                report.synthesized.append({"need": args["need"], **exc.record.test_report.to_dict()})
            raise
        report.synthesized.append({"need": args["need"], **synth.test_report.to_dict()})
        return (
            f"created tool '{synth.tool.name}' "
            f"(self-test passed in {synth.test_report.rounds_used} round(s)); "
            f"activate it with toolkit '{synth.tool.toolkit}'"
        )

    def ask_user_binding(args: dict[str, Any], ctx) -> str:
        return session.ask(args["question"])

    def create_agent_config_binding(args: dict[str, Any], ctx) -> str:
        snapshot = default_registry_snapshot(extra_toolkits=lib.toolkit_names())
        try:
            cfg = parse_config(args["yaml_text"], snapshot)
        except ConfigError as exc:
            raise ValueError(f"config rejected: {exc}") from exc
        validation = validate_config(cfg, snapshot)
        report.validation_findings = [f.to_dict() for f in validation.findings]
        if not validation.valid:
            raise ValueError(
                "config rejected: " + "; ".join(f"{f.path}: {f.message}" for f in validation.findings)
            )
        accepted["config"] = cfg
        canonical = emit_config(cfg)
        session.emit({"type": "config_preview", "yaml": canonical})
        return canonical

    return [
        ToolDef(
            name="search_tool",
            description="Search the tool library; returns matching tools with descriptions.",
            parameters=object_schema(
                {"query": {"type": "string"}, "k": {"type": "integer", "minimum": 1}},
                required=["query"],
            ),
            source="builtin_pure",
            binding=search_tool_binding,
            toolkit="meta",
        ),
        ToolDef(
            name="create_tool",
            description="Synthesize a missing tool from a capability description.",
            parameters=object_schema({"need": {"type": "string"}}),
            source="builtin_pure",
            binding=create_tool_binding,
            toolkit="meta",
        ),
        ToolDef(
            name="ask_user",
            description="Ask the human one question and wait for the answer.",
            parameters=object_schema({"question": {"type": "string"}}),
            source="builtin_pure",
            binding=ask_user_binding,
            toolkit="meta",
        ),
        ToolDef(
            name="create_agent_config",
            description="Submit the final agent configuration as YAML text.",
            parameters=object_schema({"yaml_text": {"type": "string"}}),
            source="builtin_pure",
            binding=create_agent_config_binding,
            toolkit="meta",
        ),
    ]


def run_meta_agent(
    session: DialogueSession,
    lib: ToolLibrary,
    gw: Transport,
    sandbox: EnvHandle,
    model: str = "scripted-model",
    max_turns: int = META_MAX_TURNS,
) -> tuple[AgentConfig, GenerationReport]:
    """Drive one architect episode; terminates on a valid config or max_turns."""
    report = GenerationReport(mode="meta_agent")
    accepted: dict[str, Any] = {}
    cfg = meta_agent_config(max_turns)
    tools = _meta_tools(session, lib, gw, sandbox, model, accepted, report)
    registry = ToolRegistry(
        tools={t.name: t for t in tools}, env=None, tool_s=cfg.timeouts.tool_s
    )

    def stop() -> str | None:
        if "config" in accepted:
            return emit_config(accepted["config"])
        return None

    def on_turn(turn) -> None:
        if turn.kind == "assistant_text":
            session.emit({"type": "assistant_delta", "content": turn.payload["content"]})
        elif turn.kind == "assistant_tool_calls":
            for call in turn.payload["tool_calls"]:
                session.emit(
                    {"type": "tool_event", "phase": "call", "name": call["name"], "id": call["id"]}
                )
        elif turn.kind == "tool_result":
            session.emit(
                {
                    "type": "tool_event",
                    "phase": "result",
                    "name": turn.payload["tool_name"],
                    "id": turn.payload["id"],
                    "status": turn.payload["status"],
                }
            )

    deps = RuntimeDeps(
        transport=gw, model=model, registry=registry, stop_condition=stop, on_turn=on_turn
    )
    trajectory = run_episode(cfg, _opening_task(session), deps)
    report.turns_used = trajectory.assistant_turn_count

    if "config" not in accepted:
        raise GenerationError(
            f"no valid config produced (termination: {trajectory.termination})",
            stage="no_config",
        )
    report.config_valid = True
    return accepted["config"], report


def _opening_task(session: DialogueSession) -> str:
    return (
        "Design an agent for the user. Gather requirements (use ask_user when "
        "needed), cover the capabilities with library or new tools, then submit "
        "the configuration with create_agent_config."
    )
