from __future__ import annotations

import warnings
from pathlib import Path

import pytest

from agentloom.config import AgentConfig, CtxSpec, EnvSpec, SamplingParams, TimeoutSpec, ToolkitActivation
from agentloom.gateway import ScriptedTransport, scripted_text, scripted_tool_call

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def _silence_alias_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        yield


@pytest.fixture
def mock_cfg() -> AgentConfig:
    return AgentConfig(
        name="test_agent",
        instructions="Answer tersely.",
        env=EnvSpec(name="mock"),
        context_manager=CtxSpec(),
        toolkits={"math_eval": ToolkitActivation()},
        sampling=SamplingParams(max_turns=8),
        timeouts=TimeoutSpec(tool_s=5.0, step_s=10.0, episode_s=30.0),
    )


@pytest.fixture
def sandbox_cfg() -> AgentConfig:
    return AgentConfig(
        name="sandbox_agent",
        instructions="Use the interpreter when needed.",
        env=EnvSpec(name="sandbox"),
        toolkits={"python_executor": ToolkitActivation()},
        sampling=SamplingParams(max_turns=8),
        timeouts=TimeoutSpec(tool_s=5.0, step_s=10.0, episode_s=30.0),
    )


def answer_script(*texts: str) -> ScriptedTransport:
    return ScriptedTransport([scripted_text(t) for t in texts])


def tool_then_answer(tool: str, args: dict, answer: str) -> ScriptedTransport:
    return ScriptedTransport([scripted_tool_call(tool, args), scripted_text(answer)])
