"""Rollout jobs: scheduling, storage, filtering, and training-batch export.

Jobs schedule tasks x G episodes onto a shared worker pool.  Trajectories
persist to an append-only directory store (restart-safe, diffable).  Export
applies the invalid-turn filter, computes per-group advantages, and
serializes a batch that round-trips byte-identically.
"""
from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from ..config import AgentConfig, parse_config
from ..practice import RolloutGroup, score_group
from ..runtime import RuntimeDeps, Trajectory, mark_invalid_turns, run_episode
from .advantages import compute_advantages

DEFAULT_POOL_SIZE = 64

JOB_STATUSES = ("queued", "running", "done", "failed")


class JobNotDone(Exception):
    pass


class JobNotFound(Exception):
    pass


@dataclass(frozen=True)
class JobTask:
    task_id: str
    task: str
    ground_truth: str | None = None


@dataclass
class RolloutJob:
    job_id: str
    config: AgentConfig
    tasks: list[JobTask]
    group_size: int
    temperature: float
    status: str = "queued"
    completed_episodes: int = 0
    failed_episodes: int = 0
    failure_cause: str | None = None

    @property
    def total_episodes(self) -> int:
        return len(self.tasks) * self.group_size

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "status": self.status,
            "group_size": self.group_size,
            "temperature": self.temperature,
            "tasks": [
                {"task_id": t.task_id, "task": t.task, "ground_truth": t.ground_truth}
                for t in self.tasks
            ],
            "progress": {
                "total_episodes": self.total_episodes,
                "completed": self.completed_episodes,
                "failed": self.failed_episodes,
            },
            "failure_cause": self.failure_cause,
        }


@dataclass(frozen=True)
class BatchItem:
    task_id: str
    trajectory_ref: str
    advantage: float
    turns: tuple[dict[str, Any], ...]  # valid assistant turns with token payloads

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "trajectory_ref": self.trajectory_ref,
            "advantage": self.advantage,
            "turns": list(self.turns),
        }


@dataclass(frozen=True)
class TrainingBatch:
    batch_id: str
    estimator: str
    items: tuple[BatchItem, ...]
    groups: int
    filtered_turn_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "batch_id": self.batch_id,
            "estimator": self.estimator,
            "stats": {"groups": self.groups, "filtered_turn_count": self.filtered_turn_count},
            "items": [i.to_dict() for i in self.items],
        }

    def to_jsonl(self) -> str:
        """Header record then one item record per trajectory; canonical JSON."""
        lines = [
            json.dumps(
                {
                    "batch_id": self.batch_id,
                    "estimator": self.estimator,
                    "stats": {
                        "groups": self.groups,
                        "filtered_turn_count": self.filtered_turn_count,
                    },
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        ]
        lines += [
            json.dumps(i.to_dict(), sort_keys=True, separators=(",", ":")) for i in self.items
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainingBatch":
        lines = [line for line in text.splitlines() if line.strip()]
        header = json.loads(lines[0])
        items = []
        for line in lines[1:]:
            d = json.loads(line)
            items.append(
                BatchItem(
                    task_id=d["task_id"],
                    trajectory_ref=d["trajectory_ref"],
                    advantage=d["advantage"],
                    turns=tuple(d["turns"]),
                )
            )
        return cls(
            batch_id=header["batch_id"],
            estimator=header["estimator"],
            items=tuple(items),
            groups=header["stats"]["groups"],
            filtered_turn_count=header["stats"]["filtered_turn_count"],
        )


def _export_turn(turn) -> dict[str, Any]:
    if turn.kind == "assistant_text":
        return {
            "role": "assistant",
            "content": turn.payload["content"],
            "tokens_in": turn.tokens_in,
            "tokens_out": turn.tokens_out,
        }
    return {
        "role": "assistant",
        "content": "",
        "tool_calls": list(turn.payload["tool_calls"]),
        "tokens_in": turn.tokens_in,
        "tokens_out": turn.tokens_out,
    }


class JobStore:
    """Append-only directory store: jobs/<id>/job.json + trajectories/*.json."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def job_dir(self, job_id: str) -> Path:
        return self.root / "jobs" / job_id

    def save_job(self, job: RolloutJob) -> None:
        d = self.job_dir(job.job_id)
        d.mkdir(parents=True, exist_ok=True)
        (d / "job.json").write_text(
            json.dumps(job.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )

    def save_trajectory(self, job_id: str, task_id: str, index: int, t: Trajectory) -> str:
        d = self.job_dir(job_id) / "trajectories"
        d.mkdir(parents=True, exist_ok=True)
        ref = f"{task_id}__{index}"
        (d / f"{ref}.json").write_text(
            json.dumps(t.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        return ref

    def load_trajectories(self, job_id: str, task_id: str | None = None) -> list[tuple[str, Trajectory]]:
        d = self.job_dir(job_id) / "trajectories"
        if not d.exists():
            return []
        out = []
        for path in sorted(d.glob("*.json")):
            ref = path.stem
            if task_id is not None and not ref.startswith(f"{task_id}__"):
                continue
            out.append((ref, Trajectory.from_dict(json.loads(path.read_text(encoding="utf-8")))))
        return out

    def save_batch(self, job_id: str, batch: TrainingBatch) -> Path:
        d = self.job_dir(job_id)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"batch_{batch.estimator}.jsonl"
        path.write_text(batch.to_jsonl(), encoding="utf-8")
        return path


class JobManager:
    """Owns the worker pool and every job's lifecycle."""

    def __init__(
        self,
        store: JobStore,
        runtime: RuntimeDeps,
        pool_size: int = DEFAULT_POOL_SIZE,
    ) -> None:
        self.store = store
        self.runtime = runtime
        self.pool = ThreadPoolExecutor(max_workers=pool_size)
        self.jobs: dict[str, RolloutJob] = {}
        self.groups: dict[str, dict[str, RolloutGroup]] = {}  # job -> task -> group
        self._lock = threading.Lock()
        self._futures: dict[str, list[Future]] = {}
        self._draining = False

    def submit(self, job: RolloutJob) -> RolloutJob:
        with self._lock:
            if self._draining:
                job.status = "failed"
                job.failure_cause = "shutdown"
                self.jobs[job.job_id] = job
                self.store.save_job(job)
                return job
            self.jobs[job.job_id] = job
            self.groups[job.job_id] = {}
            self.store.save_job(job)
        runner = threading.Thread(target=self._collect, args=(job,), daemon=True)
        runner.start()
        return job

    def get(self, job_id: str) -> RolloutJob:
        job = self.jobs.get(job_id)
        if job is None:
            raise JobNotFound(job_id)
        return job

    def _collect(self, job: RolloutJob) -> None:
        """Schedule tasks x G episodes; timeouts degrade, never crash the job."""
        job.status = "running"
        self.store.save_job(job)
        episode_cfg = job.config.with_temperature(job.temperature)

        def run_one(task: JobTask, g: int) -> tuple[JobTask, int, Trajectory]:
            deps = replace(
                self.runtime,
                transport=self.runtime.transport_for(task.task_id, g),
                env=None,
                episode_id=f"{job.job_id}-{task.task_id}-{g}",
            )
            try:
                return task, g, run_episode(episode_cfg, task.task, deps)
            except Exception as exc:  # worker crash isolation
                return task, g, _crash_trajectory(task, exc)

        futures = [
            self.pool.submit(run_one, task, g)
            for task in job.tasks
            for g in range(job.group_size)
        ]
        with self._lock:
            self._futures[job.job_id] = futures

        results: dict[str, list[Trajectory | None]] = {
            t.task_id: [None] * job.group_size for t in job.tasks
        }
        for future in futures:
            if future.cancelled():
                continue
            task, g, trajectory = future.result()
            self.store.save_trajectory(job.job_id, task.task_id, g, trajectory)
            with self._lock:
                results[task.task_id][g] = trajectory
                job.completed_episodes += 1
                if trajectory.termination == "fatal_error":
                    job.failed_episodes += 1

        if self._draining and any(
            any(t is None for t in group) for group in results.values()
        ):
            job.status = "failed"
            job.failure_cause = "shutdown"
            self.store.save_job(job)
            return

        for task in job.tasks:
            trajectories = [t for t in results[task.task_id] if t is not None]
            group = RolloutGroup(
                task_id=task.task_id,
                task=task.task,
                ground_truth=task.ground_truth,
                trajectories=trajectories,
            )
            mode = "ground_truth" if task.ground_truth is not None else "self_consistency"
            score_group(group, mode)
            # persist rewards back onto the stored trajectories
            for g, trajectory in enumerate(group.trajectories):
                self.store.save_trajectory(job.job_id, task.task_id, g, trajectory)
            self.groups[job.job_id][task.task_id] = group

        job.status = "done"
        self.store.save_job(job)

    def export_batch(self, job_id: str, estimator: str = "mean_baseline") -> TrainingBatch:
        """Filter invalid turns, compute group advantages, build the batch."""
        job = self.get(job_id)
        if job.status != "done":
            raise JobNotDone(f"job {job_id} is {job.status}")

        items: list[BatchItem] = []
        filtered = 0
        groups = self.groups.get(job_id, {})
        for task in job.tasks:
            group = groups[task.task_id]
            advantages = compute_advantages(group.rewards, estimator)
            for g, (trajectory, advantage) in enumerate(zip(group.trajectories, advantages)):
                marked = mark_invalid_turns(trajectory)
                kept = []
                for turn in marked.turns:
                    if not turn.kind.startswith("assistant"):
                        continue
                    if not turn.valid:
                        filtered += 1
                        continue
                    kept.append(_export_turn(turn))
                items.append(
                    BatchItem(
                        task_id=task.task_id,
                        trajectory_ref=f"{task.task_id}__{g}",
                        advantage=advantage,
                        turns=tuple(kept),
                    )
                )
        batch = TrainingBatch(
            batch_id=f"{job_id}-{estimator}",
            estimator=estimator,
            items=tuple(items),
            groups=len(groups),
            filtered_turn_count=filtered,
        )
        self.store.save_batch(job_id, batch)
        return batch

    def shutdown(self, drain_s: float | None = None) -> None:
        """Stop accepting work; running jobs that cannot finish become failed."""
        with self._lock:
            self._draining = True
            pending = [f for fs in self._futures.values() for f in fs]
        for future in pending:
            future.cancel()
        self.pool.shutdown(wait=True, cancel_futures=True)
        for job in self.jobs.values():
            if job.status in ("queued", "running"):
                job.status = "failed"
                job.failure_cause = "shutdown"
                self.store.save_job(job)


def _crash_trajectory(task: JobTask, exc: Exception) -> Trajectory:
    return Trajectory(
        episode_id=f"crash-{uuid.uuid4().hex[:8]}",
        task=task.task,
        turns=(),
        final_answer=None,
        termination="fatal_error",
        config_fingerprint="",
    )


def job_from_request(body: dict[str, Any]) -> RolloutJob:
    """Build a RolloutJob from a POST /v1/jobs body (inline config or ref)."""
    if "config_yaml" in body:
        cfg = parse_config(body["config_yaml"])
    elif "config_ref" in body:
        cfg = parse_config(Path(body["config_ref"]).read_text(encoding="utf-8"))
    else:
        raise ValueError("body must include config_yaml or config_ref")
    tasks = [
        JobTask(
            task_id=str(t.get("task_id", f"task-{i + 1}")),
            task=str(t["task"]),
            ground_truth=None if t.get("ground_truth") is None else str(t["ground_truth"]),
        )
        for i, t in enumerate(body.get("tasks", []))
    ]
    if not tasks:
        raise ValueError("job needs at least one task")
    group_size = int(body.get("group_size", 4))
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    return RolloutJob(
        job_id=body.get("job_id") or uuid.uuid4().hex[:12],
        config=cfg,
        tasks=tasks,
        group_size=group_size,
        temperature=float(body.get("temperature", cfg.sampling.temperature)),
    )
