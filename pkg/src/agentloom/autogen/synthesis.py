"""Ad-hoc tool synthesis: generate, self-test in the sandbox, repair, register.

The model must reply with a JSON interface block plus two Python blocks
(implementation, self-test).  Failures re-prompt with the captured stderr,
up to MAX_ROUNDS rounds; a tool is registered only with a passing test.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from ..environment import TIMEOUT_EXIT, EnvHandle
from ..gateway import ChatRequest, Message, Transport, complete
from ..prompts import load_prompt
from ..textparse import fenced_blocks, first_json_block
from ..tools.defs import InvokeContext, ToolDef, ToolTimeout
from .library import TestReport, ToolLibrary

MAX_ROUNDS = 3
SELF_TEST_TIMEOUT_S = 30.0
SYNTH_TEMPERATURE = 0.2
SYNTH_MAX_TOKENS = 4096


class SynthesisFailed(Exception):
    def __init__(self, message: str, record: "SynthesizedTool | None" = None) -> None:
        super().__init__(message)
        self.record = record


@dataclass
class SynthesizedTool:
    tool: ToolDef
    source_code: str
    self_test: str
    test_report: TestReport


def _parse_synthesis_reply(text: str) -> tuple[dict[str, Any], str, str]:
    meta = first_json_block(text)
    if not isinstance(meta, dict) or "name" not in meta:
        raise ValueError("interface block must be a JSON object with a 'name'")
    python_blocks = fenced_blocks(text, "python")
    if len(python_blocks) < 2:
        raise ValueError(f"expected implementation and self-test blocks, got {len(python_blocks)}")
    return meta, python_blocks[0], python_blocks[1]


def sandbox_tool_binding(name: str, source_code: str):
    """Bind a synthesized function so each invocation runs in the sandbox."""

    def binding(args: dict[str, Any], ctx: InvokeContext) -> str:
        harness = (
            f"\n\nif __name__ == '__main__':\n"
            f"    import json\n"
            f"    _args = json.loads({json.dumps(json.dumps(args))})\n"
            f"    _out = {name}(**_args)\n"
            f"    if _out is not None:\n"
            f"        print(_out)\n"
        )
        result = ctx.env.exec_code(source_code + harness, timeout_s=ctx.budget_s)
        if result.exit_code == TIMEOUT_EXIT:
            raise ToolTimeout(result.render())
        if result.exit_code != 0:
            raise RuntimeError(result.stderr.strip() or f"exit code {result.exit_code}")
        return result.stdout.rstrip("\n")

    return binding


def synthesize_tool(
    need: str,
    lib: ToolLibrary,
    gw: Transport,
    sandbox: EnvHandle,
    model: str = "scripted-model",
    created_by: str = "workflow",
    max_rounds: int = MAX_ROUNDS,
) -> SynthesizedTool:
    """Generate a tool for ``need``; raises SynthesisFailed after max_rounds."""
    base_prompt = load_prompt("tool_synthesis_v1")
    feedback = ""
    last_error = ""
    record: SynthesizedTool | None = None

    for round_no in range(1, max_rounds + 1):
        request = ChatRequest(
            model=model,
            messages=(
                Message(role="system", content=base_prompt),
                Message(role="user", content=f"Capability needed: {need}{feedback}"),
            ),
            temperature=SYNTH_TEMPERATURE,
            max_tokens=SYNTH_MAX_TOKENS,
        )
        response = complete(request, gw)
        try:
            meta, source, self_test = _parse_synthesis_reply(response.content or "")
        except ValueError as exc:
            last_error = f"reply format error: {exc}"
            feedback = f"\n\nPrevious attempt failed:\n{last_error}"
            continue

        name = meta["name"]
        result = sandbox.exec_code(source + "\n\n" + self_test, timeout_s=SELF_TEST_TIMEOUT_S)
        tool = ToolDef(
            name=name,
            description=meta.get("description", need),
            parameters=meta.get("parameters", {"type": "object", "properties": {}}),
            source="synthesized",
            binding=sandbox_tool_binding(name, source),
            toolkit=name,
        )
        if result.exit_code == 0:
            report = TestReport(passed=True, rounds_used=round_no, last_error="")
            record = SynthesizedTool(tool, source, self_test, report)
            lib.register(
                tool, tags=[name, "synthesized"], created_by=created_by,
                source_code=source, test_report=report,
            )
            return record
        last_error = (result.stderr or result.stdout or f"exit {result.exit_code}").strip()
        record = SynthesizedTool(
            tool, source, self_test, TestReport(False, round_no, last_error)
        )
        feedback = f"\n\nPrevious attempt failed its self-test with:\n{last_error[:2000]}"

    raise SynthesisFailed(
        f"self-test still failing after {max_rounds} rounds: {last_error[:200]}", record
    )
