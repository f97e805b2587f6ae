from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentloom.config import AgentConfig, EnvSpec, SamplingParams, TimeoutSpec
from agentloom.evalharness import (
    DatasetError,
    EvalTask,
    evaluate,
    load_dataset,
    normalize_answer,
    persist_report,
)
from agentloom.gateway import ScriptedTransport, scripted_text
from agentloom.runtime import RuntimeDeps


def _cfg() -> AgentConfig:
    return AgentConfig(
        name="eval_test",
        instructions="Answer.",
        env=EnvSpec(name="mock"),
        sampling=SamplingParams(max_turns=2),
        timeouts=TimeoutSpec(tool_s=2.0, step_s=4.0, episode_s=10.0),
    )


def test_normalize_trivials():
    assert normalize_answer(" 42. ") == "42"
    assert normalize_answer("1,024") == "1024"
    assert normalize_answer("  The   Answer ") == "the answer"
    assert normalize_answer("007") == "7"
    assert normalize_answer("-05") == "-5"


@given(st.text(max_size=80))
def test_normalize_idempotent(text):
    once = normalize_answer(text)
    assert normalize_answer(once) == once


def _deps_for(answer_map: dict[tuple[str, int], str]) -> RuntimeDeps:
    transports = {
        key: ScriptedTransport([scripted_text(answer)]) for key, answer in answer_map.items()
    }
    return RuntimeDeps(
        transport=ScriptedTransport([]), transport_provider=lambda t, i: transports[(t, i)]
    )


def test_pass_at_1_scripted():
    tasks = [EvalTask(id=f"t{i}", task="q", answer="yes") for i in range(4)]
    answers = {("t0", 0): "yes", ("t1", 0): "yes", ("t2", 0): "no", ("t3", 0): "yes"}
    report = evaluate(_cfg(), tasks, "pass_at_1", 1, 4, _deps_for(answers))
    assert report.aggregate == 0.75
    assert report.metric == "pass_at_1"


def test_mean_at_k_24_of_32():
    answers = {("t0", i): ("7" if i < 24 else "8") for i in range(32)}
    report = evaluate(
        _cfg(), [EvalTask(id="t0", task="q", answer="7")], "mean_at_k", 32, 8, _deps_for(answers)
    )
    assert report.aggregate == 0.75
    assert report.per_task[0].correct == 24


def test_pass_at_1_requires_k_1():
    with pytest.raises(ValueError):
        evaluate(_cfg(), [], "pass_at_1", 2, 1, RuntimeDeps(transport=ScriptedTransport([])))


def test_dataset_error_carries_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "task": "ok"}\n{"id": "b"}\n')
    with pytest.raises(DatasetError) as err:
        load_dataset(path)
    assert err.value.line == 2


def test_dataset_loads_fields(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"id": "a", "task": "q1", "answer": "1"}\n{"task": "q2"}\n')
    tasks = load_dataset(path)
    assert tasks[0] == EvalTask(id="a", task="q1", answer="1")
    assert tasks[1].id == "task-2" and tasks[1].answer is None


def test_report_independent_of_concurrency():
    tasks = [EvalTask(id=f"t{i}", task="q", answer=str(i)) for i in range(6)]

    def fresh_deps():
        answers = {(f"t{i}", k): str(i) if i % 2 == 0 else "x" for i in range(6) for k in range(2)}
        return _deps_for(answers)

    serial = evaluate(_cfg(), tasks, "mean_at_k", 2, 1, fresh_deps())
    parallel = evaluate(_cfg(), tasks, "mean_at_k", 2, 64, fresh_deps())
    assert json.dumps(serial.to_dict(), sort_keys=True) == json.dumps(
        parallel.to_dict(), sort_keys=True
    )


def test_failures_plus_scored_matches_total():
    tasks = [EvalTask(id="a", task="q", answer="1"), EvalTask(id="b", task="q", answer="2")]
    transports = {("a", 0): ScriptedTransport([scripted_text("1")]), ("b", 0): ScriptedTransport([])}
    deps = RuntimeDeps(
        transport=ScriptedTransport([]), transport_provider=lambda t, i: transports[(t, i)]
    )
    report = evaluate(_cfg(), tasks, "mean_at_k", 1, 2, deps)
    answered = sum(1 for r in report.per_task for a in r.answers if a is not None)
    assert report.failures + answered == 2 * 1
    assert 0.0 <= report.aggregate <= 1.0


def test_persist_report_layout(tmp_path):
    report = evaluate(
        _cfg(),
        [EvalTask(id="t0", task="q", answer="1")],
        "pass_at_1",
        1,
        1,
        _deps_for({("t0", 0): "1"}),
    )
    path = persist_report(report, tmp_path, "demo")
    assert path.parent == tmp_path / "demo" / report.config_fingerprint
    assert json.loads(path.read_text())["aggregate"] == 1.0
