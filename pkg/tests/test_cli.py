from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from agentloom.cli import main

CONFIG = """\
agent:
  name: cli_agent
  instructions: Answer the question.
toolkits:
  math_eval: {}
sampling:
  max_turns: 4
timeouts:
  tool_s: 2
  step_s: 4
  episode_s: 10
"""


@pytest.fixture
def runner():
    return CliRunner()


def _write_script(path, responses: list[dict]) -> str:
    path.write_text(json.dumps(responses))
    return str(path)


def _text_response(text: str) -> dict:
    return {"content": text, "tool_calls": [], "finish_reason": "stop"}


def test_run_prints_answer_and_writes_trajectory(tmp_path, runner):
    cfg = tmp_path / "agent.yaml"
    cfg.write_text(CONFIG)
    script = _write_script(tmp_path / "script.json", [_text_response("forty-two")])
    out = tmp_path / "traj.json"
    result = runner.invoke(
        main,
        ["run", "-c", str(cfg), "-t", "meaning?", "--out", str(out), "--transport", f"scripted:{script}"],
    )
    assert result.exit_code == 0, result.output
    assert "forty-two" in result.output
    trajectory = json.loads(out.read_text())
    assert trajectory["termination"] == "answered"
    assert trajectory["final_answer"] == "forty-two"


def test_eval_command_reports_aggregate(tmp_path, runner):
    cfg = tmp_path / "agent.yaml"
    cfg.write_text(CONFIG)
    dataset = tmp_path / "data.jsonl"
    dataset.write_text('{"id": "a", "task": "q", "answer": "1"}\n')
    script = _write_script(tmp_path / "script.json", [_text_response("1")])
    out = tmp_path / "report.json"
    result = runner.invoke(
        main,
        [
            "eval", "-c", str(cfg), "-d", str(dataset), "--metric", "pass_at_1",
            "--concurrency", "1", "--out", str(out),
            "--results-dir", str(tmp_path / "results"), "--transport", f"scripted:{script}",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "pass_at_1 = 1.0000" in result.output
    assert json.loads(out.read_text())["aggregate"] == 1.0


def test_practice_command_prints_epochs(tmp_path, runner):
    cfg = tmp_path / "agent.yaml"
    cfg.write_text(CONFIG)
    dataset = tmp_path / "data.jsonl"
    dataset.write_text('{"id": "a", "task": "q", "answer": "1"}\n')
    # 2 episodes, both wrong and identical: zero-contrast, no distill call needed
    script = _write_script(
        tmp_path / "script.json", [_text_response("9"), _text_response("9")]
    )
    result = runner.invoke(
        main,
        [
            "practice", "-c", str(cfg), "-d", str(dataset), "--epochs", "1",
            "--group-size", "2", "--temp", "0.7", "--run-id", "clirun",
            "--out-dir", str(tmp_path), "--transport", f"scripted:{script}",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "epoch 1: mean_reward=0.000" in result.output
    assert (tmp_path / "banks" / "clirun" / "epoch_1.json").exists()


def test_gen_workflow_emits_config(tmp_path, runner):
    clarify_reply = (
        "```json\n"
        + json.dumps(
            {
                "objective": "Search the web for answers",
                "required_capabilities": ["web-search"],
                "env_constraints": [],
                "open_questions": [],
            }
        )
        + "\n```"
    )
    script = _write_script(
        tmp_path / "script.json",
        [_text_response(clarify_reply), _text_response("You search the web and answer.")],
    )
    out = tmp_path / "generated.yaml"
    result = runner.invoke(
        main,
        [
            "gen", "workflow", "search the web", "--library", str(tmp_path / "lib"),
            "--out", str(out), "--transport", f"scripted:{script}",
        ],
    )
    assert result.exit_code == 0, result.output
    from agentloom.config import parse_config, validate_config

    cfg = parse_config(out.read_text())
    assert validate_config(cfg).valid
    assert "search" in cfg.toolkits


def test_run_nonzero_exit_on_failure(tmp_path, runner):
    cfg = tmp_path / "agent.yaml"
    cfg.write_text(CONFIG)
    script = _write_script(tmp_path / "script.json", [])  # immediate exhaustion
    result = runner.invoke(
        main, ["run", "-c", str(cfg), "-t", "q", "--transport", f"scripted:{script}"]
    )
    assert result.exit_code == 1
    assert "fatal_error" in result.output
