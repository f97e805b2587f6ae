"""Experience practice loop: grouped rollouts, relative scoring, distillation.

Per task the agent produces a group of G trajectories; rewards are assigned
against ground truth or by self-consistency; when the group shows contrast
(not all rewards equal) an LLM distills bank edits from the high/low-reward
comparison.  The bank rides every subsequent prompt as injected context.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .config import AgentConfig
from .evalharness import EvalTask, MetricsReport, evaluate, normalize_answer
from .experience import BankEdit, EditOutcome, ExperienceBank, save_bank, snapshot_path
from .gateway import ChatRequest, Message, Transport, complete
from .prompts import load_prompt
from .runtime import RuntimeDeps, Trajectory, run_episode
from .textparse import first_json_block

logger = logging.getLogger(__name__)

DISTILL_TEMPERATURE = 0.3
DISTILL_MAX_TOKENS = 2048
SUMMARY_ARG_CHARS = 48


class MissingGroundTruth(Exception):
    pass


class DistillError(Exception):
    pass


@dataclass
class RolloutGroup:
    task_id: str
    task: str
    ground_truth: str | None
    trajectories: list[Trajectory]
    rewards: list[float] = field(default_factory=list)
    semantic_advantage: str | None = None

    @property
    def group_size(self) -> int:
        return len(self.trajectories)


def rollout_group(
    cfg: AgentConfig,
    task: str,
    bank: ExperienceBank | None,
    G: int,
    temperature: float,
    runtime: RuntimeDeps,
    task_id: str = "task",
    epoch: int = 0,
) -> RolloutGroup:
    """Run G independent episodes for one task, bank injected into each."""
    if G < 2:
        raise ValueError("group size must be >= 2")
    episode_cfg = cfg.with_temperature(temperature)

    transport_key = f"{task_id}#e{epoch}" if epoch else task_id

    def run_one(i: int) -> Trajectory:
        deps = replace(
            runtime,
            transport=runtime.transport_for(transport_key, i),
            bank=bank,
            env=None,
            episode_id=f"{task_id}-ep{epoch}-g{i}",
        )
        return run_episode(episode_cfg, task, deps)

    with ThreadPoolExecutor(max_workers=min(G, 16)) as pool:
        trajectories = list(pool.map(run_one, range(G)))
    return RolloutGroup(task_id=task_id, task=task, ground_truth=None, trajectories=trajectories)


def score_group(
    g: RolloutGroup, mode: str, gw: Transport | None = None
) -> RolloutGroup:
    """Assign rewards in [0,1]: exact match against ground truth, or majority
    vote among answered trajectories (tied majority clusters get 0.5)."""
    if mode == "ground_truth":
        if g.ground_truth is None:
            raise MissingGroundTruth(f"task {g.task_id} has no ground truth")
        target = normalize_answer(g.ground_truth)
        rewards = [
            1.0
            if t.termination == "answered" and normalize_answer(t.final_answer or "") == target
            else 0.0
            for t in g.trajectories
        ]
    elif mode == "self_consistency":
        clusters: dict[str, int] = {}
        keys: list[str | None] = []
        for t in g.trajectories:
            if t.termination == "answered":
                key = normalize_answer(t.final_answer or "")
                clusters[key] = clusters.get(key, 0) + 1
                keys.append(key)
            else:
                keys.append(None)
        rewards = []
        if clusters:
            top = max(clusters.values())
            winners = {k for k, n in clusters.items() if n == top}
            tied = len(winners) > 1
            for key in keys:
                if key is None or key not in winners:
                    rewards.append(0.0)
                else:
                    rewards.append(0.5 if tied else 1.0)
        else:
            rewards = [0.0] * len(keys)
    else:
        raise ValueError(f"unknown scoring mode {mode!r}")

    g.rewards = rewards
    g.trajectories = [replace(t, reward=r) for t, r in zip(g.trajectories, rewards)]
    return g


def _summarize(t: Trajectory, reward: float, full: bool) -> str:
    if full:
        return json.dumps(t.to_dict(), sort_keys=True)
    calls = []
    for turn in t.turns:
        if turn.kind == "assistant_tool_calls":
            for c in turn.payload["tool_calls"]:
                args = str(c["arguments"])
                if len(args) > SUMMARY_ARG_CHARS:
                    args = args[:SUMMARY_ARG_CHARS] + "..."
                calls.append(f"{c['name']}({args})")
    answer = t.final_answer if t.termination == "answered" else f"<{t.termination}>"
    return f"answer={answer!r} calls=[{', '.join(calls)}] reward={reward:g}"


def distill_semantic_advantage(
    g: RolloutGroup,
    bank: ExperienceBank,
    gw: Transport,
    model: str = "scripted-model",
    full_transcripts: bool = False,
) -> list[BankEdit]:
    """Contrast the group's trials and return bank edits.

    Groups with all-equal rewards carry no contrast (the textual analogue of
    a zero advantage) and return no edits without a gateway call.
    """
    if not g.rewards:
        raise ValueError("rewards must be set before distillation")
    if len(set(g.rewards)) <= 1:
        return []

    lines = [f"Task: {g.task}", "", "Attempts:"]
    for i, (t, r) in enumerate(zip(g.trajectories, g.rewards), start=1):
        lines.append(f"{i}. {_summarize(t, r, full_transcripts)}")
    lines.append("")
    if len(bank):
        lines.append("Current experience bank:")
        for e in bank.entries:
            lines.append(f"- [{e.id}] {e.text}")
    else:
        lines.append("Current experience bank: (empty)")
    user_text = "\n".join(lines)

    def ask(extra: str = "") -> Any:
        request = ChatRequest(
            model=model,
            messages=(
                Message(role="system", content=load_prompt("distill_v1")),
                Message(role="user", content=user_text + extra),
            ),
            temperature=DISTILL_TEMPERATURE,
            max_tokens=DISTILL_MAX_TOKENS,
        )
        return complete(request, gw)

    response = ask()
    try:
        payload = first_json_block(response.content or "")
        return _parse_edits(payload)
    except (ValueError, KeyError, TypeError) as exc:
        retry = ask(f"\n\nYour previous reply was not parsable ({exc}); reply with one fenced JSON list of edits.")
        try:
            payload = first_json_block(retry.content or "")
            return _parse_edits(payload)
        except (ValueError, KeyError, TypeError) as exc2:
            raise DistillError(f"unparsable distillation output after re-prompt: {exc2}") from exc2


def _parse_edits(payload: Any) -> list[BankEdit]:
    if not isinstance(payload, list):
        raise ValueError("expected a JSON list of edits")
    return [BankEdit.from_dict(d) for d in payload]


@dataclass
class GroupRecord:
    task_id: str
    rewards: list[float]
    edits_applied: int
    edits_rejected: int
    skipped_reason: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "rewards": self.rewards,
            "edits_applied": self.edits_applied,
            "edits_rejected": self.edits_rejected,
            "skipped_reason": self.skipped_reason,
        }


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    mean_tool_calls: float
    groups: list[GroupRecord]

    def to_dict(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "mean_reward": self.mean_reward,
            "mean_tool_calls": self.mean_tool_calls,
            "groups": [g.to_dict() for g in self.groups],
        }


@dataclass
class PracticeReport:
    run_id: str
    epochs: list[EpochStats]
    episodes_attempted: int
    snapshots: list[ExperienceBank]

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "epochs": [e.to_dict() for e in self.epochs],
            "episodes_attempted": self.episodes_attempted,
        }


def practice_run(
    cfg: AgentConfig,
    dataset: Sequence[tuple[str, str | None]] | Sequence[EvalTask],
    epochs: int,
    G: int,
    temp_train: float,
    runtime: RuntimeDeps,
    bank: ExperienceBank | None = None,
    run_id: str = "practice",
    persist_root: str | Path | None = None,
) -> tuple[ExperienceBank, PracticeReport]:
    """Run the epoch loop over the dataset, maintaining the experience bank.

    The bank is snapshotted after every epoch (epoch 0 = initial state);
    per-task failures are logged and skipped, never fatal.
    """
    tasks = _as_tasks(dataset)
    if not tasks:
        raise ValueError("dataset must be nonempty")
    bank = bank if bank is not None else ExperienceBank()
    snapshots = [bank]
    if persist_root is not None:
        save_bank(bank, snapshot_path(persist_root, run_id, 0))

    stats: list[EpochStats] = []
    episodes_attempted = 0
    for epoch in range(1, epochs + 1):
        records: list[GroupRecord] = []
        epoch_rewards: list[float] = []
        epoch_tool_calls: list[int] = []
        for task in tasks:
            try:
                group = rollout_group(
                    cfg, task.task, bank, G, temp_train, runtime, task_id=task.id, epoch=epoch
                )
                episodes_attempted += G
                group.ground_truth = task.answer
                mode = "ground_truth" if task.answer is not None else "self_consistency"
                score_group(group, mode)
                epoch_rewards.extend(group.rewards)
                epoch_tool_calls.extend(t.tool_call_count for t in group.trajectories)

                if len(set(group.rewards)) <= 1:
                    records.append(
                        GroupRecord(task.id, group.rewards, 0, 0, skipped_reason="no_contrast")
                    )
                    continue
                edits = distill_semantic_advantage(group, bank, runtime.transport, runtime.model)
                bank, outcome = bank.apply_edits(edits, epoch=epoch, origin_task_id=task.id)
                for edit, reason in outcome.rejected:
                    logger.warning("rejected edit %s for task %s: %s", edit, task.id, reason)
                records.append(
                    GroupRecord(task.id, group.rewards, len(outcome.applied), len(outcome.rejected))
                )
            except (DistillError, MissingGroundTruth) as exc:
                logger.warning("task %s skipped in epoch %d: %s", task.id, epoch, exc)
                records.append(GroupRecord(task.id, [], 0, 0, skipped_reason=str(exc)))
        n = len(epoch_rewards)
        stats.append(
            EpochStats(
                epoch=epoch,
                mean_reward=(sum(epoch_rewards) / n) if n else 0.0,
                mean_tool_calls=(sum(epoch_tool_calls) / n) if n else 0.0,
                groups=records,
            )
        )
        snapshots.append(bank)
        if persist_root is not None:
            save_bank(bank, snapshot_path(persist_root, run_id, epoch))

    report = PracticeReport(
        run_id=run_id, epochs=stats, episodes_attempted=episodes_attempted, snapshots=snapshots
    )
    return bank, report


def _as_tasks(dataset: Iterable) -> list[EvalTask]:
    tasks: list[EvalTask] = []
    for i, item in enumerate(dataset):
        if isinstance(item, EvalTask):
            tasks.append(item)
        else:
            task_text, answer = item
            tasks.append(EvalTask(id=f"task-{i + 1}", task=task_text, answer=answer))
    return tasks


def test_with_bank(
    cfg: AgentConfig,
    bank: ExperienceBank,
    tasks: Sequence[EvalTask],
    temp_test: float,
    runtime: RuntimeDeps,
    metric: str = "mean_at_k",
    k: int = 1,
    concurrency: int = 8,
) -> MetricsReport:
    """Evaluate with experiences injected; identical contract to evaluate()."""
    deps = replace(runtime, bank=bank)
    return evaluate(cfg.with_temperature(temp_test), tasks, metric, k, concurrency, deps)


test_with_bank.__test__ = False  # not a pytest test despite the name
