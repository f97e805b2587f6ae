"""Deterministic four-stage generation pipeline.

clarify -> retrieve/synthesize -> write instructions -> assemble+validate.
Stage 4 validates through the config module, so every config this pipeline
returns is valid by construction.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

from ..config import (
    AgentConfig,
    CtxSpec,
    EnvSpec,
    ToolkitActivation,
    validate_config,
)
from ..environment import EnvHandle
from ..gateway import ChatRequest, Message, Transport, complete
from ..prompts import load_prompt
from ..registries import default_registry_snapshot
from ..textparse import first_json_block
from ..tools.defs import ToolDef
from .library import ToolLibrary, search_tools, tokenize
from .synthesis import SynthesisFailed, SynthesizedTool, synthesize_tool

GEN_TEMPERATURE = 0.3
GEN_MAX_TOKENS = 4096
RETRIEVAL_K = 3


class GenerationError(Exception):
    def __init__(self, message: str, stage: int | str = 0) -> None:
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class RequirementSpec:
    objective: str
    required_capabilities: tuple[str, ...]
    env_constraints: tuple[str, ...] = ()
    open_questions: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "objective": self.objective,
            "required_capabilities": list(self.required_capabilities),
            "env_constraints": list(self.env_constraints),
            "open_questions": list(self.open_questions),
        }


@dataclass
class GenerationReport:
    mode: str  # workflow | meta_agent
    requirement: RequirementSpec | None = None
    retrieved: dict[str, list[str]] = field(default_factory=dict)  # capability -> tool names
    synthesized: list[dict[str, Any]] = field(default_factory=list)
    instructions: str = ""
    config_valid: bool = False
    validation_findings: list[dict[str, Any]] = field(default_factory=list)
    turns_used: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "requirement": self.requirement.to_dict() if self.requirement else None,
                "retrieved": self.retrieved,
                "synthesized": self.synthesized,
                "instructions": self.instructions,
                "config_valid": self.config_valid,
                "validation_findings": self.validation_findings,
                "turns_used": self.turns_used,
            },
            indent=2,
            sort_keys=True,
        )


def clarify(description: str, gw: Transport, model: str = "scripted-model") -> RequirementSpec:
    """Stage 1: one gateway call producing a structured requirement spec."""
    if not description.strip():
        raise ValueError("description must be nonempty")

    def ask(extra: str = "") -> Any:
        request = ChatRequest(
            model=model,
            messages=(
                Message(role="system", content=load_prompt("clarify_v1")),
                Message(role="user", content=description + extra),
            ),
            temperature=GEN_TEMPERATURE,
            max_tokens=GEN_MAX_TOKENS,
        )
        return complete(request, gw)

    response = ask()
    for attempt in range(2):
        try:
            payload = first_json_block(response.content or "")
            return RequirementSpec(
                objective=str(payload["objective"]),
                required_capabilities=tuple(payload.get("required_capabilities", [])),
                env_constraints=tuple(payload.get("env_constraints", [])),
                open_questions=tuple(payload.get("open_questions", [])),
            )
        except (ValueError, KeyError, TypeError) as exc:
            if attempt == 1:
                raise GenerationError(f"unparsable requirement spec: {exc}", stage=1) from exc
            response = ask("\n\nReply again with exactly one fenced JSON block.")
    raise GenerationError("unreachable", stage=1)


def _covered(capability: str, tools: list[ToolDef]) -> bool:
    cap_tokens = tokenize(capability)
    for tool in tools:
        if cap_tokens & (tokenize(tool.name) | tokenize(tool.description) | tokenize(tool.toolkit)):
            return True
    return False


def _slug(text: str, max_words: int = 4) -> str:
    words = re.findall(r"[A-Za-z0-9]+", text.lower())[:max_words]
    return "_".join(words) if words else "generated"


def _write_instructions(
    spec: RequirementSpec, tools: list[ToolDef], gw: Transport, model: str
) -> str:
    tool_lines = "\n".join(f"- {t.name}: {t.description}" for t in tools)
    request = ChatRequest(
        model=model,
        messages=(
            Message(role="system", content=load_prompt("prompt_engineering_v1")),
            Message(
                role="user",
                content=f"Objective: {spec.objective}\n"
                f"Capabilities: {', '.join(spec.required_capabilities)}\n"
                f"Tools:\n{tool_lines}",
            ),
        ),
        temperature=GEN_TEMPERATURE,
        max_tokens=GEN_MAX_TOKENS,
    )
    return (complete(request, gw).content or "").strip()


def assemble_config(
    name: str, instructions: str, tools: list[ToolDef], lib: ToolLibrary
) -> AgentConfig:
    """Group tools by toolkit and produce a validated AgentConfig."""
    by_toolkit: dict[str, list[str]] = {}
    for tool in tools:
        by_toolkit.setdefault(tool.toolkit or tool.name, []).append(tool.name)

    toolkits: dict[str, ToolkitActivation] = {}
    for toolkit, names in by_toolkit.items():
        entry = lib.toolkit_names().get(toolkit, frozenset())
        if set(names) == set(entry):
            toolkits[toolkit] = ToolkitActivation()  # all tools: empty activation
        else:
            toolkits[toolkit] = ToolkitActivation(activated_tools=tuple(sorted(names)))

    needs_env = any(t.source in ("builtin_env", "synthesized") for t in tools)
    return AgentConfig(
        name=name,
        instructions=instructions,
        env=EnvSpec(name="sandbox" if needs_env else "mock"),
        context_manager=CtxSpec(),
        toolkits=toolkits,
    )


def generate_workflow(
    description: str,
    lib: ToolLibrary,
    gw: Transport,
    sandbox: EnvHandle,
    model: str = "scripted-model",
) -> tuple[AgentConfig, GenerationReport]:
    """Run the four-stage pipeline; raises GenerationError with the failing stage."""
    report = GenerationReport(mode="workflow")

    try:
        spec = clarify(description, gw, model)
    except ValueError as exc:
        raise GenerationError(str(exc), stage=1) from exc
    report.requirement = spec

    tools: list[ToolDef] = []
    seen: set[str] = set()
    for capability in spec.required_capabilities:
        hits = search_tools(lib, capability, RETRIEVAL_K)
        report.retrieved[capability] = [t.name for t in hits]
        if _covered(capability, hits):
            for t in hits[:1]:  # the top hit covers the capability
                if t.name not in seen:
                    seen.add(t.name)
                    tools.append(t)
            continue
        try:
            synth: SynthesizedTool = synthesize_tool(
                f"{capability}: {spec.objective}", lib, gw, sandbox, model=model
            )
        except SynthesisFailed as exc:
            if exc.record is not None:
                report.synthesized.append(
                    {"need": capability, **exc.record.test_report.to_dict()}
                )
            raise GenerationError(f"cannot cover capability '{capability}': {exc}", stage=2) from exc
        report.synthesized.append({"need": capability, **synth.test_report.to_dict()})
        seen.add(synth.tool.name)
        tools.append(synth.tool)

    instructions = _write_instructions(spec, tools, gw, model)
    report.instructions = instructions

    cfg = assemble_config(f"{_slug(spec.objective)}_agent", instructions, tools, lib)
    snapshot = default_registry_snapshot(extra_toolkits=lib.toolkit_names())
    validation = validate_config(cfg, snapshot)
    report.config_valid = validation.valid
    report.validation_findings = [f.to_dict() for f in validation.findings]
    if not validation.valid:
        raise GenerationError(
            "assembled config failed validation: "
            + "; ".join(f.message for f in validation.findings),
            stage=4,
        )
    return cfg, report
