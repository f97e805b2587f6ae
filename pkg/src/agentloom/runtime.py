"""The agent loop: context management, trajectory recording, turn filtering.

An episode is bounded by nested budgets (tool < step < episode).  Exhaustion
degrades only its own level: a tool timeout becomes a timeout ToolResult, a
step timeout becomes a system note, and only the episode budget terminates
the run.  Every failure mode is a termination cause; run_episode never
raises.
"""
from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

from .budget import BoundedTimeout, Deadline, run_bounded
from .config import AgentConfig, CtxSpec, config_fingerprint
from .environment import EnvHandle, create_env
from .experience import ExperienceBank
from .gateway import ChatRequest, ChatResponse, Message, Transport, complete, count_tokens
from .tools.builtins import ToolkitFactory
from .tools.defs import InvokeContext, ToolCall
from .tools.registry import ToolRegistry, build_registry, invoke

DEFAULT_TOKEN_BUDGET = 24_000
DEFAULT_KEEP_LAST = 2
REPETITION_WINDOW = 2  # prior duplicate count that marks a turn anomalous

TERMINATIONS = ("answered", "max_turns", "episode_timeout", "fatal_error")


class BudgetImpossible(Exception):
    """Protected messages alone exceed the context token budget."""


@dataclass(frozen=True)
class Turn:
    kind: str  # assistant_text | assistant_tool_calls | tool_result | system_note
    payload: Mapping[str, Any]
    tokens_in: int = 0
    tokens_out: int = 0
    wall_time_ms: int = 0
    valid: bool = True
    token_source: str = "estimate"  # usage | estimate

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "payload": dict(self.payload),
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "wall_time_ms": self.wall_time_ms,
            "valid": self.valid,
            "token_source": self.token_source,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Turn":
        return cls(
            kind=d["kind"],
            payload=d["payload"],
            tokens_in=d.get("tokens_in", 0),
            tokens_out=d.get("tokens_out", 0),
            wall_time_ms=d.get("wall_time_ms", 0),
            valid=d.get("valid", True),
            token_source=d.get("token_source", "estimate"),
        )


@dataclass(frozen=True)
class Trajectory:
    episode_id: str
    task: str
    turns: tuple[Turn, ...]
    final_answer: str | None
    termination: str
    config_fingerprint: str
    reward: float | None = None
    wall_time_ms: int = 0
    started_at: float = 0.0

    @property
    def tool_call_count(self) -> int:
        return sum(1 for t in self.turns if t.kind == "tool_result")

    @property
    def assistant_turn_count(self) -> int:
        return sum(1 for t in self.turns if t.kind.startswith("assistant"))

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "task": self.task,
            "turns": [t.to_dict() for t in self.turns],
            "final_answer": self.final_answer,
            "termination": self.termination,
            "config_fingerprint": self.config_fingerprint,
            "reward": self.reward,
            "wall_time_ms": self.wall_time_ms,
            "started_at": self.started_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Trajectory":
        return cls(
            episode_id=d["episode_id"],
            task=d["task"],
            turns=tuple(Turn.from_dict(t) for t in d["turns"]),
            final_answer=d.get("final_answer"),
            termination=d["termination"],
            config_fingerprint=d.get("config_fingerprint", ""),
            reward=d.get("reward"),
            wall_time_ms=d.get("wall_time_ms", 0),
            started_at=d.get("started_at", 0.0),
        )


@dataclass
class ContextState:
    system_prompt: str
    task_message: str
    window: list[Message] = field(default_factory=list)
    pruned_count: int = 0
    token_budget: int = DEFAULT_TOKEN_BUDGET
    injected_experiences: str | None = None

    def rendered_system_prompt(self) -> str:
        if self.injected_experiences:
            return f"{self.system_prompt}\n\n{self.injected_experiences}"
        return self.system_prompt

    def render_messages(self) -> tuple[Message, ...]:
        return (
            Message(role="system", content=self.rendered_system_prompt()),
            Message(role="user", content=self.task_message),
            *self.window,
        )

    def estimated_tokens(self) -> int:
        total = 0
        for m in self.render_messages():
            total += count_tokens(m.content)
            for c in m.tool_calls:
                total += count_tokens(c.arguments) + count_tokens(c.name)
        return total

    def protected_tokens(self) -> int:
        return count_tokens(self.rendered_system_prompt()) + count_tokens(self.task_message)


def _rounds(window: list[Message]) -> list[list[Message]]:
    """Group the window into rounds: an assistant message plus its tool results."""
    rounds: list[list[Message]] = []
    for msg in window:
        if msg.role == "tool" and rounds and rounds[-1][0].role == "assistant":
            rounds[-1].append(msg)
        else:
            rounds.append([msg])
    return rounds


_PLACEHOLDER_PREFIX = "[pruned tool output: "


def manage_context(state: ContextState, policy: CtxSpec) -> ContextState:
    """Bring the rendered context within the token budget.

    ``base`` drops the oldest non-protected rounds; ``pruning`` first replaces
    stale tool-result bodies with placeholders, then falls back to dropping.
    """
    budget = int(policy.config.get("token_budget", state.token_budget))
    state.token_budget = budget
    if state.protected_tokens() > budget:
        raise BudgetImpossible(
            f"protected messages need {state.protected_tokens()} tokens, budget is {budget}"
        )
    if state.estimated_tokens() <= budget:
        return state  # identity when already within budget

    if policy.name == "pruning":
        keep_last = int(policy.config.get("keep_last", DEFAULT_KEEP_LAST))
        rounds = _rounds(state.window)
        cutoff = len(rounds) - keep_last
        changed = False
        for i, round_msgs in enumerate(rounds):
            if i >= cutoff:
                continue
            for j, msg in enumerate(round_msgs):
                if msg.role == "tool" and not msg.content.startswith(_PLACEHOLDER_PREFIX):
                    size = len(msg.content.encode("utf-8"))
                    round_msgs[j] = Message(
                        role="tool",
                        content=f"{_PLACEHOLDER_PREFIX}{size} bytes]",
                        tool_call_id=msg.tool_call_id,
                    )
                    state.pruned_count += 1
                    changed = True
        if changed:
            state.window = [m for r in rounds for m in r]
        if state.estimated_tokens() <= budget:
            return state

    # base dropping: remove oldest rounds until within budget
    rounds = _rounds(state.window)
    while rounds and state.estimated_tokens() > budget:
        dropped = rounds.pop(0)
        state.pruned_count += len(dropped)
        state.window = [m for r in rounds for m in r]
    return state


def inject_experiences(state: ContextState, bank: ExperienceBank | None) -> ContextState:
    """Attach the bank's rendered block to the system prompt; idempotent."""
    if bank is None or not len(bank):
        return state
    state.injected_experiences = bank.render()
    return state


@dataclass
class RuntimeDeps:
    """Everything an episode needs beyond its config."""

    transport: Transport
    model: str = "scripted-model"
    env: EnvHandle | None = None
    registry: ToolRegistry | None = None
    extra_toolkit_factories: Mapping[str, ToolkitFactory] | None = None
    bank: ExperienceBank | None = None
    clock: Callable[[], float] = time.monotonic
    wall_clock: Callable[[], float] = time.time
    depth: int = 0
    episode_id: str | None = None
    close_env: bool = True
    stop_condition: Callable[[], str | None] | None = None
    transport_provider: Callable[[str, int], Transport] | None = None
    on_turn: Callable[[Turn], None] | None = None

    def transport_for(self, task_key: str, sample_index: int) -> Transport:
        if self.transport_provider is not None:
            return self.transport_provider(task_key, sample_index)
        return self.transport


def _assistant_turn(resp: ChatResponse, wall_ms: int) -> Turn:
    source = "estimate" if resp.usage.estimated else "usage"
    if resp.tool_calls:
        payload = {
            "tool_calls": [
                {"id": c.id, "name": c.name, "arguments": c.arguments} for c in resp.tool_calls
            ]
        }
        kind = "assistant_tool_calls"
    else:
        payload = {"content": resp.content or ""}
        kind = "assistant_text"
    return Turn(
        kind=kind,
        payload=payload,
        tokens_in=resp.usage.prompt_tokens,
        tokens_out=resp.usage.completion_tokens,
        wall_time_ms=wall_ms,
        token_source=source,
    )


def run_episode(cfg: AgentConfig, task: str, deps: RuntimeDeps) -> Trajectory:
    """Run one episode to termination; the environment is always closed."""
    clock = deps.clock
    started_at = deps.wall_clock()
    start = clock()
    episode_deadline = Deadline.after(cfg.timeouts.episode_s, clock)
    fingerprint = config_fingerprint(cfg)
    episode_id = deps.episode_id or uuid.uuid4().hex

    turns: list[Turn] = []

    def record(turn: Turn) -> None:
        turns.append(turn)
        if deps.on_turn is not None:
            deps.on_turn(turn)

    final_answer: str | None = None
    termination = "fatal_error"
    env = deps.env
    owns_env = env is None

    def finish() -> Trajectory:
        return Trajectory(
            episode_id=episode_id,
            task=task,
            turns=tuple(turns),
            final_answer=final_answer,
            termination=termination,
            config_fingerprint=fingerprint,
            wall_time_ms=int((clock() - start) * 1000),
            started_at=started_at,
        )

    try:
        if env is None:
            env = create_env(cfg.env, clock)
        registry = deps.registry or build_registry(cfg, env, deps.extra_toolkit_factories)

        state = ContextState(
            system_prompt=cfg.instructions,
            task_message=task,
            token_budget=int(cfg.context_manager.config.get("token_budget", DEFAULT_TOKEN_BUDGET)),
        )
        inject_experiences(state, deps.bank)

        model_calls = 0
        while True:
            if model_calls >= cfg.sampling.max_turns:
                termination = "max_turns"
                break
            if episode_deadline.expired():
                termination = "episode_timeout"
                break

            manage_context(state, cfg.context_manager)
            request = ChatRequest(
                model=deps.model,
                messages=state.render_messages(),
                tools=registry.declarations(),
                temperature=cfg.sampling.temperature,
                max_tokens=cfg.sampling.max_tokens,
            )

            step_budget = episode_deadline.capped(cfg.timeouts.step_s)
            step_deadline = Deadline.after(step_budget, clock)
            episode_capped = step_budget < cfg.timeouts.step_s
            call_start = clock()
            model_calls += 1
            try:
                resp = run_bounded(
                    lambda: complete(request, deps.transport), step_deadline.remaining()
                )
            except BoundedTimeout:
                if episode_capped:
                    termination = "episode_timeout"
                    break
                note = f"step timed out after {cfg.timeouts.step_s:g}s; response discarded"
                record(
                    Turn(
                        kind="system_note",
                        payload={"note": note},
                        wall_time_ms=int((clock() - call_start) * 1000),
                    )
                )
                state.window.append(Message(role="user", content=f"[system note] {note}"))
                continue

            wall_ms = int((clock() - call_start) * 1000)
            record(_assistant_turn(resp, wall_ms))

            if resp.finish_reason == "error":
                termination = "fatal_error"
                break

            if not resp.tool_calls:
                final_answer = resp.content or ""
                termination = "answered"
                break

            state.window.append(
                Message(role="assistant", content=resp.content or "", tool_calls=resp.tool_calls)
            )
            for call_record in resp.tool_calls:
                call = ToolCall(call_record.id, call_record.name, call_record.arguments)
                budget = min(step_deadline.remaining(), episode_deadline.remaining())
                ctx = InvokeContext(
                    env=env,
                    transport=deps.transport,
                    episode_deadline=episode_deadline,
                    depth=deps.depth,
                    clock=clock,
                    extra={"wall_clock": deps.wall_clock},
                )
                if budget <= 0:
                    result = invoke(registry, call, 1e-9, ctx)  # forced budget-exhausted result
                else:
                    result = invoke(registry, call, budget, ctx)
                record(
                    Turn(
                        kind="tool_result",
                        payload={
                            "id": result.id,
                            "tool_name": call.tool_name,
                            "status": result.status,
                            "content": result.content,
                        },
                        tokens_in=count_tokens(result.content),
                        wall_time_ms=result.wall_time_ms,
                    )
                )
                state.window.append(
                    Message(role="tool", content=result.content, tool_call_id=call.id)
                )

            if deps.stop_condition is not None:
                stop_answer = deps.stop_condition()
                if stop_answer is not None:
                    final_answer = stop_answer
                    termination = "answered"
                    break
    except Exception as exc:
        record(
            Turn(kind="system_note", payload={"note": f"fatal: {type(exc).__name__}: {exc}"})
        )
        termination = "fatal_error"
    finally:
        if env is not None and (owns_env or deps.close_env):
            try:
                env.close()
            except Exception:
                pass

    return finish()


def _call_signature(turn: Turn) -> str | None:
    if turn.kind != "assistant_tool_calls":
        return None
    calls = [(c["name"], c["arguments"]) for c in turn.payload["tool_calls"]]
    return json.dumps(calls, sort_keys=True)


def _arguments_parse_ok(turn: Turn) -> bool:
    for c in turn.payload.get("tool_calls", []):
        raw = c["arguments"]
        if isinstance(raw, str) and raw.strip():
            try:
                parsed = json.loads(raw)
            except json.JSONDecodeError:
                return False
            if not isinstance(parsed, dict):
                return False
    return True


def mark_invalid_turns(t: Trajectory) -> Trajectory:
    """Flag assistant turns whose tool calls were invalid or degenerate.

    A turn is invalid when any of its calls produced a status=invalid result,
    its arguments failed to parse, or it repeats the identical call signature
    of both preceding assistant turns.
    """
    invalid_result_ids: set[str] = set()
    for turn in t.turns:
        if turn.kind == "tool_result" and turn.payload.get("status") == "invalid":
            invalid_result_ids.add(turn.payload["id"])

    new_turns: list[Turn] = []
    recent_signatures: list[str | None] = []
    for turn in t.turns:
        valid = True
        if turn.kind == "assistant_tool_calls":
            call_ids = {c["id"] for c in turn.payload["tool_calls"]}
            if call_ids & invalid_result_ids:
                valid = False
            elif not _arguments_parse_ok(turn):
                valid = False
            else:
                sig = _call_signature(turn)
                priors = recent_signatures[-REPETITION_WINDOW:]
                if (
                    sig is not None
                    and len(priors) == REPETITION_WINDOW
                    and all(p == sig for p in priors)
                ):
                    valid = False
        if turn.kind.startswith("assistant"):
            recent_signatures.append(_call_signature(turn))
        new_turns.append(replace(turn, valid=valid))
    return replace(t, turns=tuple(new_turns))
