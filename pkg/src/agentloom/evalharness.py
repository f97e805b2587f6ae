"""Benchmark runner: pass@1 and Mean@k over JSONL datasets.

Episodes run concurrently up to a cap; scoring is exact match after answer
normalization.  Reports are deterministic for scripted transports and
independent of the concurrency level.
"""
from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

from .config import AgentConfig, config_fingerprint
from .runtime import RuntimeDeps, Trajectory, run_episode


class DatasetError(Exception):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class EvalTask:
    id: str
    task: str
    answer: str | None = None
    attachments: tuple[str, ...] = ()


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    score: float
    answers: tuple[str | None, ...]
    correct: int
    attempts: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "score": self.score,
            "answers": list(self.answers),
            "correct": self.correct,
            "attempts": self.attempts,
        }


@dataclass(frozen=True)
class MetricsReport:
    metric: str  # pass_at_1 | mean_at_k
    k: int
    per_task: tuple[TaskResult, ...]
    aggregate: float
    mean_turns: float
    mean_tool_calls: float
    failures: int
    config_fingerprint: str
    transport_kind: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric": self.metric,
            "k": self.k,
            "per_task": [r.to_dict() for r in self.per_task],
            "aggregate": self.aggregate,
            "episode_stats": {
                "mean_turns": self.mean_turns,
                "mean_tool_calls": self.mean_tool_calls,
                "failures": self.failures,
            },
            "config_fingerprint": self.config_fingerprint,
            "transport_kind": self.transport_kind,
        }


_INT_RE = re.compile(r"[+-]?[0-9][0-9,]*")


def normalize_answer(text: str) -> str:
    """Trim, casefold, collapse whitespace, strip trailing periods,
    canonicalize decimal integers (drop commas and leading zeros)."""
    out = " ".join(text.split()).casefold().rstrip(".").strip()
    if _INT_RE.fullmatch(out):
        sign = "-" if out.startswith("-") else ""
        digits = out.lstrip("+-").replace(",", "").lstrip("0")
        out = sign + (digits or "0")
    return out


def load_dataset(path: str | Path) -> list[EvalTask]:
    """Parse a JSONL dataset with fields {id, task, answer?, attachments?}."""
    tasks: list[EvalTask] = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON ({exc.msg})", line=n) from exc
        if not isinstance(record, dict) or "task" not in record:
            raise DatasetError("missing required field 'task'", line=n)
        tasks.append(
            EvalTask(
                id=str(record.get("id", f"task-{n}")),
                task=str(record["task"]),
                answer=None if record.get("answer") is None else str(record["answer"]),
                attachments=tuple(record.get("attachments", [])),
            )
        )
    return tasks


def _score(trajectory: Trajectory, answer: str | None) -> float:
    if trajectory.termination != "answered" or answer is None:
        return 0.0
    return 1.0 if normalize_answer(trajectory.final_answer or "") == normalize_answer(answer) else 0.0


def evaluate(
    cfg: AgentConfig,
    dataset: Iterable[EvalTask],
    metric: str,
    k: int,
    concurrency: int,
    runtime: RuntimeDeps,
) -> MetricsReport:
    """Run k episodes per task and aggregate exact-match scores."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if metric == "pass_at_1" and k != 1:
        raise ValueError("pass_at_1 requires k=1")
    if metric not in ("pass_at_1", "mean_at_k"):
        raise ValueError(f"unknown metric {metric!r}")

    tasks = list(dataset)
    jobs = [(task, attempt) for task in tasks for attempt in range(k)]

    def run_one(job: tuple[EvalTask, int]) -> tuple[str, int, Trajectory]:
        task, attempt = job
        deps = replace(
            runtime,
            transport=runtime.transport_for(task.id, attempt),
            episode_id=f"{task.id}@{attempt}",
            env=None,
        )
        return task.id, attempt, run_episode(cfg, task.task, deps)

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        outcomes = list(pool.map(run_one, jobs))

    by_task: dict[str, list[tuple[int, Trajectory]]] = {t.id: [] for t in tasks}
    for task_id, attempt, trajectory in outcomes:
        by_task[task_id].append((attempt, trajectory))

    per_task: list[TaskResult] = []
    all_trajectories: list[Trajectory] = []
    failures = 0
    for task in tasks:
        attempts = sorted(by_task[task.id])
        scores = []
        answers: list[str | None] = []
        for _, trajectory in attempts:
            all_trajectories.append(trajectory)
            if trajectory.termination != "answered":
                failures += 1
            scores.append(_score(trajectory, task.answer))
            answers.append(trajectory.final_answer)
        correct = int(sum(scores))
        per_task.append(
            TaskResult(
                task_id=task.id,
                score=sum(scores) / k,
                answers=tuple(answers),
                correct=correct,
                attempts=k,
            )
        )

    aggregate = sum(r.score for r in per_task) / len(per_task) if per_task else 0.0
    n = len(all_trajectories)
    return MetricsReport(
        metric=metric,
        k=k,
        per_task=tuple(per_task),
        aggregate=aggregate,
        mean_turns=(sum(len(t.turns) for t in all_trajectories) / n) if n else 0.0,
        mean_tool_calls=(sum(t.tool_call_count for t in all_trajectories) / n) if n else 0.0,
        failures=failures,
        config_fingerprint=config_fingerprint(cfg),
        transport_kind=getattr(runtime.transport, "kind", "unknown"),
    )


def persist_report(report: MetricsReport, results_root: str | Path, dataset_name: str) -> Path:
    """Write a report under results/<dataset>/<config_fp>/<timestamp>.json."""
    out_dir = Path(results_root) / dataset_name / report.config_fingerprint
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%S") + f"-{int(time.time() * 1000) % 1000:03d}"
    path = out_dir / f"{stamp}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return path
