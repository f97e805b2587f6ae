"""Acceptance gate: one test per release criterion, printed pass/fail.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the criterion
lines.  Everything here is scripted and hermetic; tolerances are stated
inline next to each assertion.
"""
from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from math import fsum
from pathlib import Path

import numpy as np
import pytest

from agentloom.autogen import DialogueSession, SynthesisFailed, run_meta_agent, seed_builtin_library, synthesize_tool
from agentloom.config import (
    AgentConfig,
    ConfigError,
    EnvSpec,
    SamplingParams,
    TimeoutSpec,
    ToolkitActivation,
    emit_config,
    parse_config,
    validate_config,
)
from agentloom.environment import MockEnv, create_env
from agentloom.evalharness import EvalTask, evaluate
from agentloom.experience import load_bank, snapshot_path
from agentloom.gateway import ScriptedTransport, scripted_text, scripted_tool_call
from agentloom.practice import practice_run
from agentloom.runtime import RuntimeDeps, run_episode
from agentloom.service import JobManager, JobStore, TrainingBatch, job_from_request
from agentloom.service.advantages import compute_advantages, mean_baseline_exact
from agentloom.tools import ToolDef, object_schema

CORPUS = Path(__file__).parent / "data" / "config_corpus"


def _report(criterion: str, detail: str = "") -> None:
    print(f"PASS {criterion}" + (f" ({detail})" if detail else ""))


# --------------------------------------------------------------------------
# 1. Config suite
# --------------------------------------------------------------------------


def test_criterion_1_config_suite():
    start = time.monotonic()
    valid_files = sorted((CORPUS / "valid").glob("*.yaml"))
    invalid_files = sorted((CORPUS / "invalid").glob("*.yaml"))
    assert len(valid_files) == 40 and len(invalid_files) == 20

    for path in valid_files:
        cfg = parse_config(path.read_text())
        report = validate_config(cfg)
        assert report.valid, (path.name, report.findings)
        once = emit_config(cfg)
        assert parse_config(once) == cfg, path.name
        assert emit_config(parse_config(once)) == once, path.name  # byte-stable

    for path in invalid_files:
        try:
            cfg = parse_config(path.read_text())
        except ConfigError as exc:
            assert exc.path, path.name  # path-bearing rejection
            continue
        report = validate_config(cfg)
        assert not report.valid, path.name
        assert len(report.findings) >= 1 and all(f.path for f in report.findings), path.name

    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"config suite took {elapsed:.2f}s (limit 5s)"
    _report("criterion 1: config suite 40 valid / 20 invalid", f"{elapsed:.2f}s")


# --------------------------------------------------------------------------
# 2. Tool-synthesis loop (16 scripted scenarios, mock sandbox)
# --------------------------------------------------------------------------


def _synth_reply(name: str, marker: str) -> str:
    meta = {
        "name": name,
        "description": f"tool {name}",
        "parameters": {"type": "object", "properties": {"x": {"type": "string"}}, "required": ["x"]},
    }
    source = f"# {marker}\ndef {name}(x: str) -> str:\n    return x\n"
    self_test = f"assert {name}('a') == 'a'"
    return (
        "```json\n" + json.dumps(meta) + "\n```\n"
        "```python\n" + source + "```\n"
        "```python\n" + self_test + "\n```"
    )


def test_criterion_2_tool_synthesis_loop(tmp_path):
    start = time.monotonic()
    mock_sandbox = MockEnv(
        {
            "script": [
                {"match": "MARK_FAIL", "on": "code", "result": {"stderr": "marker failure", "exit_code": 1}},
                {"match": "MARK_PASS", "on": "code", "result": {"exit_code": 0}},
            ]
        }
    )
    lib = seed_builtin_library(tmp_path / "lib", clock=lambda: 0.0)

    # 12 successes: 4 at round 1, 4 at round 2, 4 at round 3; then 4 exhausted
    scenarios: list[tuple[str, int | None]] = []
    scenarios += [(f"tool_r1_{i}", 1) for i in range(4)]
    scenarios += [(f"tool_r2_{i}", 2) for i in range(4)]
    scenarios += [(f"tool_r3_{i}", 3) for i in range(4)]
    scenarios += [(f"tool_fail_{i}", None) for i in range(4)]
    assert len(scenarios) == 16

    registered = 0
    failures = 0
    for name, pass_round in scenarios:
        replies = []
        rounds = 3 if pass_round is None else pass_round
        for round_no in range(1, rounds + 1):
            marker = "MARK_PASS" if round_no == pass_round else "MARK_FAIL"
            replies.append(scripted_text(_synth_reply(name, marker)))
        gw = ScriptedTransport(replies)
        if pass_round is None:
            with pytest.raises(SynthesisFailed) as err:
                synthesize_tool(name, lib, gw, mock_sandbox)
            assert err.value.record is not None  # report retained
            assert err.value.record.test_report.rounds_used == 3
            assert not err.value.record.test_report.passed
            failures += 1
        else:
            synth = synthesize_tool(name, lib, gw, mock_sandbox)
            assert synth.test_report.passed
            assert synth.test_report.rounds_used == pass_round
            registered += 1
        gw.assert_exhausted()

    synthesized_entries = [e for e in lib.entries if e.tool.source == "synthesized"]
    assert registered == 12 and len(synthesized_entries) == 12
    assert all(e.test_report and e.test_report.passed for e in synthesized_entries)
    assert failures == 4
    mock_sandbox.close()

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"synthesis suite took {elapsed:.2f}s (limit 60s)"
    _report("criterion 2: synthesis 12 registered / 4 exhausted", f"{elapsed:.2f}s")


# --------------------------------------------------------------------------
# 3. Meta-agent end-to-end (case-study script)
# --------------------------------------------------------------------------

FETCH_SOURCE = (
    "def fetch_daily_papers(date: str) -> str:\n"
    '    """One line per paper listed for the date."""\n'
    '    listing = {"2026-01-05": ["paper-a", "paper-b"]}\n'
    '    return "\\n".join(listing.get(date, []))\n'
)

PAPERS_CONFIG_YAML = """\
agent:
  name: Papers_Analyzer_Agent
  instructions: You analyze daily papers and download requested PDFs.
env:
  name: sandbox
toolkits:
  search:
    activated_tools: ["search", "web_qa"]
  arxiv:
    activated_tools: ["download_papers"]
  fetch_daily_papers: {}
"""


def _case_study_transport() -> ScriptedTransport:
    synth_meta = {
        "name": "fetch_daily_papers",
        "description": "fetch the daily paper listing",
        "parameters": {
            "type": "object",
            "properties": {"date": {"type": "string"}},
            "required": ["date"],
        },
    }
    synth_reply = (
        "```json\n" + json.dumps(synth_meta) + "\n```\n"
        "```python\n" + FETCH_SOURCE + "```\n"
        "```python\nassert fetch_daily_papers('2026-01-05') == 'paper-a\\npaper-b'\n```"
    )
    return ScriptedTransport(
        [
            scripted_tool_call("search_tool", {"query": "arxiv paper download"}),
            scripted_tool_call("create_tool", {"need": "fetch daily paper listing for a date"}),
            scripted_text(synth_reply),
            scripted_tool_call("create_agent_config", {"yaml_text": PAPERS_CONFIG_YAML}),
        ]
    )


def test_criterion_3_meta_agent_end_to_end(tmp_path):
    start = time.monotonic()

    def run_once(tag: str) -> str:
        lib = seed_builtin_library(tmp_path / f"lib_{tag}", clock=lambda: 0.0)
        sandbox = create_env(EnvSpec(name="sandbox", config={"workdir": str(tmp_path / tag)}))
        try:
            gw = _case_study_transport()
            cfg, report = run_meta_agent(DialogueSession(), lib, gw, sandbox)
            gw.assert_exhausted()
            assert set(cfg.toolkits) == {"search", "arxiv", "fetch_daily_papers"}
            assert report.config_valid
            return emit_config(cfg)
        finally:
            sandbox.close()

    first, second = run_once("a"), run_once("b")
    assert first == second  # deterministic
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"meta-agent case study took {elapsed:.2f}s (limit 10s)"
    _report("criterion 3: meta-agent case study toolkits exact", f"{elapsed:.2f}s")


# --------------------------------------------------------------------------
# 4. Advantage oracle
# --------------------------------------------------------------------------


def test_criterion_4_advantage_oracle():
    assert compute_advantages([1, 0, 0, 0, 1], "mean_baseline") == [0.6, -0.4, -0.4, -0.4, 0.6]

    rng = random.Random(424242)
    for _ in range(1000):
        G = rng.randint(2, 16)
        rewards = [rng.choice([0.0, 0.5, 1.0]) for _ in range(G)]
        arr = np.array(rewards, dtype=np.float64)

        ours_mb = np.array(compute_advantages(rewards, "mean_baseline"))
        assert np.max(np.abs(ours_mb - (arr - arr.mean()))) < 1e-9

        ours_std = np.array(compute_advantages(rewards, "grpo_std"))
        sigma = arr.std()
        oracle = np.zeros_like(arr) if sigma == 0 else (arr - arr.mean()) / sigma
        assert np.max(np.abs(ours_std - oracle)) < 1e-9

        # within-group sums: exact (rational) for mean_baseline, 1e-9 for grpo_std
        assert sum(mean_baseline_exact(rewards), Fraction(0)) == 0
        assert abs(fsum(ours_std.tolist())) < 1e-9
    _report("criterion 4: advantages match brute-force oracle on 1000 groups")


# --------------------------------------------------------------------------
# 5. Timeout hierarchy fault injection
# --------------------------------------------------------------------------

TOOL_S, STEP_S, EPISODE_S = 0.4, 0.8, 1.6


def _hang_toolkit(env, config):
    def hang(args, ctx):
        time.sleep(float(args["seconds"]))
        return "slept"

    return [
        ToolDef(
            name="hang",
            description="sleeps for the given seconds",
            parameters=object_schema({"seconds": {"type": "number"}}),
            source="builtin_pure",
            binding=hang,
            toolkit="fault",
        )
    ]


def _fault_cfg() -> AgentConfig:
    return AgentConfig(
        name="fault_agent",
        instructions="x",
        env=EnvSpec(name="mock"),
        toolkits={"fault": ToolkitActivation()},
        sampling=SamplingParams(max_turns=6),
        timeouts=TimeoutSpec(tool_s=TOOL_S, step_s=STEP_S, episode_s=EPISODE_S),
    )


def _run_fault_episode(level: str) -> tuple[str, object]:
    if level == "tool":
        transport = ScriptedTransport(
            [scripted_tool_call("hang", {"seconds": 30}), scripted_text("done")]
        )
    elif level == "step":
        transport = ScriptedTransport(
            [scripted_text("discarded"), scripted_text("done")], latency_s=[30.0, 0.0]
        )
    else:  # episode: every model call hangs
        transport = ScriptedTransport(
            [scripted_text("never")] * 6, latency_s=[30.0] * 6
        )
    deps = RuntimeDeps(transport=transport, extra_toolkit_factories={"fault": _hang_toolkit})
    return level, run_episode(_fault_cfg(), "task", deps)


def test_criterion_5_timeout_hierarchy():
    rng = random.Random(5150)
    levels = [rng.choice(["tool", "step", "episode"]) for _ in range(100)]
    start = time.monotonic()
    with ThreadPoolExecutor(max_workers=50) as pool:
        outcomes = list(pool.map(_run_fault_episode, levels))

    for level, trajectory in outcomes:
        assert trajectory.termination != "fatal_error"  # zero job-level failures
        if level == "tool":
            assert trajectory.termination == "answered"
            tool_turn = next(t for t in trajectory.turns if t.kind == "tool_result")
            assert tool_turn.payload["status"] == "timeout"
            assert 0.9 * TOOL_S <= tool_turn.wall_time_ms / 1000 <= 1.1 * TOOL_S
        elif level == "step":
            assert trajectory.termination == "answered"
            note = next(t for t in trajectory.turns if t.kind == "system_note")
            assert "step timed out" in note.payload["note"]
            assert 0.9 * STEP_S <= note.wall_time_ms / 1000 <= 1.1 * STEP_S
        else:
            assert trajectory.termination == "episode_timeout"
            assert 0.9 * EPISODE_S <= trajectory.wall_time_ms / 1000 <= 1.1 * EPISODE_S
    elapsed = time.monotonic() - start
    counts = {lvl: levels.count(lvl) for lvl in ("tool", "step", "episode")}
    _report("criterion 5: timeout hierarchy on 100 randomized episodes", f"{counts}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 6. Concurrency / throughput
# --------------------------------------------------------------------------


def _three_turn_script(answer: str, latency: float) -> ScriptedTransport:
    return ScriptedTransport(
        [
            scripted_tool_call("evaluate", {"expression": "1+1"}),
            scripted_tool_call("evaluate", {"expression": "2+2"}),
            scripted_text(answer),
        ],
        latency_s=latency,
    )


def _eval_cfg() -> AgentConfig:
    return AgentConfig(
        name="throughput",
        instructions="x",
        env=EnvSpec(name="mock"),
        toolkits={"math_eval": ToolkitActivation()},
        sampling=SamplingParams(max_turns=4),
        timeouts=TimeoutSpec(tool_s=5.0, step_s=10.0, episode_s=30.0),
    )


def test_criterion_6_throughput_and_determinism():
    tasks = [EvalTask(id=f"t{i}", task="q", answer=str(i)) for i in range(64)]

    # warmup pays one-time thread/alloc costs, then measure one episode
    run_episode(_eval_cfg(), "q", RuntimeDeps(transport=_three_turn_script("0", 0.0)))
    single_deps = RuntimeDeps(transport=_three_turn_script("0", 0.05))
    start = time.monotonic()
    run_episode(_eval_cfg(), "q", single_deps)
    single_wall = time.monotonic() - start

    def deps_with_latency(latency: float) -> RuntimeDeps:
        transports = {
            (f"t{i}", 0): _three_turn_script(str(i), latency) for i in range(64)
        }
        return RuntimeDeps(
            transport=ScriptedTransport([]),
            transport_provider=lambda t, a: transports[(t, a)],
        )

    start = time.monotonic()
    parallel_report = evaluate(_eval_cfg(), tasks, "mean_at_k", 1, 64, deps_with_latency(0.05))
    parallel_wall = time.monotonic() - start
    assert parallel_wall < 2 * single_wall, (
        f"64 episodes at pool 64 took {parallel_wall:.2f}s vs single {single_wall:.2f}s"
    )
    assert parallel_report.aggregate == 1.0

    # determinism: identical report for concurrency 1 and 64 (latency-free)
    serial_report = evaluate(_eval_cfg(), tasks, "mean_at_k", 1, 1, deps_with_latency(0.0))
    parallel_report2 = evaluate(_eval_cfg(), tasks, "mean_at_k", 1, 64, deps_with_latency(0.0))
    assert json.dumps(serial_report.to_dict(), sort_keys=True) == json.dumps(
        parallel_report2.to_dict(), sort_keys=True
    )
    _report(
        "criterion 6: 64-way concurrency",
        f"single {single_wall * 1000:.0f}ms, 64 episodes {parallel_wall * 1000:.0f}ms",
    )


# --------------------------------------------------------------------------
# 7. Practice loop
# --------------------------------------------------------------------------


def _edit_reply(edits: list[dict]) -> str:
    return "```json\n" + json.dumps(edits) + "\n```"


def test_criterion_7_practice_loop(tmp_path):
    # authored answers: per task, per epoch, G=3 (ground truth is "7")
    answers = {
        1: {"t1": ["7", "8", "9"], "t2": ["8", "8", "8"], "t3": ["7", "7", "8"],
            "t4": ["8", "7", "9"], "t5": ["9", "9", "7"]},
        2: {"t1": ["7", "7", "8"], "t2": ["7", "8", "8"], "t3": ["7", "7", "7"],
            "t4": ["7", "7", "8"], "t5": ["7", "9", "7"]},
        3: {task: ["7", "7", "7"] for task in ("t1", "t2", "t3", "t4", "t5")},
    }
    transports = {
        (f"{task}#e{epoch}", i): ScriptedTransport([scripted_text(answer)])
        for epoch, by_task in answers.items()
        for task, per_g in by_task.items()
        for i, answer in enumerate(per_g)
    }
    # distillation happens only for contrastive groups, in dataset order:
    # epoch 1: t1, t3, t4, t5; epoch 2: t1, t2, t4, t5 (t2@e1 and t3@e2 are uniform)
    distill_replies = [
        _edit_reply([{"op": "add", "text": "check the arithmetic twice"}]),       # t1 e1
        _edit_reply([{"op": "add", "text": "prefer exact integer answers"}]),     # t3 e1
        _edit_reply([{"op": "add", "text": "restate the question first"}]),       # t4 e1
        _edit_reply([{"op": "keep"}]),                                            # t5 e1
        _edit_reply([{"op": "revise", "target_id": "exp-0001",
                      "text": "check the arithmetic twice, carefully"}]),         # t1 e2
        _edit_reply([{"op": "add", "text": "show only the final number"}]),       # t2 e2
        _edit_reply([{"op": "remove", "target_id": "exp-0002"}]),                 # t4 e2
        _edit_reply([{"op": "add", "text": "answer in a single token"}]),         # t5 e2
    ]
    distill_gw = ScriptedTransport([scripted_text(r) for r in distill_replies])
    deps = RuntimeDeps(
        transport=distill_gw, transport_provider=lambda key, i: transports[(key, i)]
    )
    dataset = [EvalTask(id=f"t{i}", task=f"question {i}", answer="7") for i in range(1, 6)]

    bank, report = practice_run(
        _eval_cfg(), dataset, epochs=3, G=3, temp_train=0.7, runtime=deps,
        run_id="acc7", persist_root=tmp_path,
    )
    distill_gw.assert_exhausted()

    means = [e.mean_reward for e in report.epochs]
    assert means == [pytest.approx(5 / 15), pytest.approx(10 / 15), pytest.approx(1.0)]
    assert means[0] < means[1] < means[2]  # strictly increasing

    # bank edits applied exactly as scripted
    assert [(e.id, e.text) for e in bank.entries] == [
        ("exp-0001", "check the arithmetic twice, carefully"),
        ("exp-0003", "restate the question first"),
        ("exp-0004", "show only the final number"),
        ("exp-0005", "answer in a single token"),
    ]
    assert bank.entries[0].last_modified_epoch == 2

    # uniform-reward groups leave the bank untouched (t2@e1, t3@e2, all 5 @e3)
    uniform = [g for e in report.epochs for g in e.groups if g.skipped_reason == "no_contrast"]
    assert len(uniform) == 7
    assert all(g.edits_applied == 0 for g in uniform)

    # epoch snapshots reconstruct exactly
    snap0 = load_bank(snapshot_path(tmp_path, "acc7", 0))
    snap1 = load_bank(snapshot_path(tmp_path, "acc7", 1))
    snap3 = load_bank(snapshot_path(tmp_path, "acc7", 3))
    assert snap0.entries == ()
    assert [e.text for e in snap1.entries] == [
        "check the arithmetic twice",
        "prefer exact integer answers",
        "restate the question first",
    ]
    assert snap3.entries == bank.entries

    # empty-bank practice episodes are prompt-byte-identical to plain episodes
    def first_request(bank_arg):
        transport = ScriptedTransport([scripted_text("7")])
        run_episode(_eval_cfg(), "question 1", RuntimeDeps(transport=transport, bank=bank_arg))
        return json.dumps(transport.requests[0].to_payload(), sort_keys=True)

    from agentloom.experience import ExperienceBank

    assert first_request(None) == first_request(ExperienceBank())
    _report("criterion 7: practice loop rewards strictly increase; snapshots exact")


# --------------------------------------------------------------------------
# 8. Metrics fidelity
# --------------------------------------------------------------------------


def test_criterion_8_metrics_fidelity():
    # Mean@32 with 24 correct = 0.75 exactly
    transports = {("t0", i): ScriptedTransport([scripted_text("7" if i < 24 else "8")]) for i in range(32)}
    deps = RuntimeDeps(
        transport=ScriptedTransport([]), transport_provider=lambda t, a: transports[(t, a)]
    )
    report = evaluate(
        _eval_cfg(), [EvalTask(id="t0", task="q", answer="7")], "mean_at_k", 32, 8, deps
    )
    assert report.aggregate == 0.75

    # pass@1 over [1,1,0,1] = 0.75 exactly
    tasks = [EvalTask(id=f"p{i}", task="q", answer="y") for i in range(4)]
    transports = {
        (f"p{i}", 0): ScriptedTransport([scripted_text("y" if i != 2 else "n")]) for i in range(4)
    }
    deps = RuntimeDeps(
        transport=ScriptedTransport([]), transport_provider=lambda t, a: transports[(t, a)]
    )
    report = evaluate(_eval_cfg(), tasks, "pass_at_1", 1, 4, deps)
    assert report.aggregate == 0.75
    _report("criterion 8: Mean@32 = 0.75 and pass@1 = 0.75 exactly")


# --------------------------------------------------------------------------
# 9. Export hygiene
# --------------------------------------------------------------------------

EXPORT_JOB_CONFIG = """\
agent:
  name: export_agent
  instructions: Answer the question.
toolkits:
  math_eval: {}
sampling:
  max_turns: 6
timeouts:
  tool_s: 2
  step_s: 4
  episode_s: 10
"""


def test_criterion_9_export_hygiene(tmp_path):
    same = {"expression": "1+1"}
    scripts = {
        # g0: unknown tool + malformed args -> 2 invalid assistant turns
        ("t0", 0): [
            scripted_tool_call("ghost_tool", {}),
            scripted_tool_call("evaluate", "{broken"),
            scripted_text("yes"),
        ],
        # g1: three identical calls -> third flagged anomalous
        ("t0", 1): [
            scripted_tool_call("evaluate", same),
            scripted_tool_call("evaluate", same),
            scripted_tool_call("evaluate", same),
            scripted_text("no"),
        ],
    }
    transports = {key: ScriptedTransport(resp) for key, resp in scripts.items()}
    runtime = RuntimeDeps(
        transport=ScriptedTransport([]),
        transport_provider=lambda t, g: transports[(t, g)],
    )
    manager = JobManager(JobStore(tmp_path), runtime, pool_size=4)
    job = job_from_request(
        {
            "config_yaml": EXPORT_JOB_CONFIG,
            "group_size": 2,
            "tasks": [{"task_id": "t0", "task": "q", "ground_truth": "yes"}],
        }
    )
    manager.submit(job)
    deadline = time.monotonic() + 10
    while job.status != "done" and time.monotonic() < deadline:
        time.sleep(0.02)
    assert job.status == "done"

    batch = manager.export_batch(job.job_id, "mean_baseline")
    assert batch.filtered_turn_count == 3
    # invalid turns are absent: g0 keeps only its final text turn,
    # g1 keeps two tool-call turns plus the final text turn
    turns_by_ref = {item.trajectory_ref: item.turns for item in batch.items}
    assert len(turns_by_ref["t0__0"]) == 1
    assert len(turns_by_ref["t0__1"]) == 3
    for item in batch.items:
        for turn in item.turns:
            assert turn["role"] == "assistant"

    # rewards [1, 0] -> advantages [0.5, -0.5]
    advantages = {item.trajectory_ref: item.advantage for item in batch.items}
    assert advantages == {"t0__0": 0.5, "t0__1": -0.5}

    # round-trips byte-identically
    text = batch.to_jsonl()
    assert TrainingBatch.from_jsonl(text).to_jsonl() == text
    manager.pool.shutdown(wait=False)
    _report("criterion 9: export drops 3 flagged turns; JSONL round-trip byte-identical")
