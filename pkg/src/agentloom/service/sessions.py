"""Meta-agent dialogue sessions served over an event stream.

State machine: running <-> awaiting_user -> done | failed.  Events get
monotonically increasing ids so a dropped consumer resumes from the last id
it saw.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from ..autogen.library import ToolLibrary
from ..autogen.meta import DialogueSession, run_meta_agent
from ..autogen.workflow import GenerationError
from ..config import emit_config
from ..environment import EnvHandle
from ..gateway import Transport


class SessionNotFound(Exception):
    pass


class NotAwaitingUser(Exception):
    pass


@dataclass
class SessionState:
    session_id: str
    dialogue: DialogueSession
    events: list[dict[str, Any]] = field(default_factory=list)
    status: str = "running"  # running | awaiting_user | done | failed
    final_yaml: str | None = None
    error: str | None = None
    cond: threading.Condition = field(default_factory=threading.Condition)

    def push(self, event: dict[str, Any]) -> None:
        with self.cond:
            event = dict(event)
            event["id"] = len(self.events) + 1
            self.events.append(event)
            if event["type"] == "ask_user":
                self.status = "awaiting_user"
            self.cond.notify_all()

    def finish(self, yaml_text: str | None, error: str | None) -> None:
        with self.cond:
            if error is None:
                self.status = "done"
                self.final_yaml = yaml_text
                event = {"type": "done", "yaml": yaml_text}
            else:
                self.status = "failed"
                self.error = error
                event = {"type": "failed", "error": error}
            event["id"] = len(self.events) + 1
            self.events.append(event)
            self.cond.notify_all()

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "status": self.status,
            "pending_question": self.dialogue.pending_question,
            "final_yaml": self.final_yaml,
            "error": self.error,
            "event_count": len(self.events),
        }


class SessionManager:
    def __init__(
        self,
        library: ToolLibrary,
        transport_factory: Callable[[dict[str, Any]], Transport],
        sandbox_factory: Callable[[], EnvHandle],
        model: str = "scripted-model",
    ) -> None:
        self.library = library
        self.transport_factory = transport_factory
        self.sandbox_factory = sandbox_factory
        self.model = model
        self.sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()

    def create(self, body: dict[str, Any]) -> SessionState:
        session_id = uuid.uuid4().hex[:12]
        dialogue = DialogueSession(answers=list(body.get("answers", [])))
        state = SessionState(session_id=session_id, dialogue=dialogue)
        dialogue.on_event = state.push
        with self._lock:
            self.sessions[session_id] = state

        transport = self.transport_factory(body)

        def run() -> None:
            sandbox = self.sandbox_factory()
            try:
                cfg, _report = run_meta_agent(
                    dialogue, self.library, transport, sandbox, model=self.model
                )
                state.finish(emit_config(cfg), None)
            except GenerationError as exc:
                state.finish(None, str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                state.finish(None, f"{type(exc).__name__}: {exc}")
            finally:
                sandbox.close()

        threading.Thread(target=run, daemon=True).start()
        return state

    def get(self, session_id: str) -> SessionState:
        state = self.sessions.get(session_id)
        if state is None:
            raise SessionNotFound(session_id)
        return state

    def answer(self, session_id: str, text: str) -> SessionState:
        state = self.get(session_id)
        with state.cond:
            if state.status != "awaiting_user":
                raise NotAwaitingUser(f"session {session_id} is {state.status}")
            state.status = "running"
        state.dialogue.provide_answer(text)
        return state

    def stream(self, session_id: str, last_event_id: int = 0) -> Iterator[str]:
        """Yield server-sent events from last_event_id+1 until terminal."""
        state = self.get(session_id)
        cursor = last_event_id
        while True:
            with state.cond:
                while len(state.events) <= cursor and state.status not in ("done", "failed"):
                    state.cond.wait(timeout=0.25)
                batch = state.events[cursor:]
                cursor = len(state.events)
                terminal = state.status in ("done", "failed")
            for event in batch:
                payload = {k: v for k, v in event.items() if k != "id"}
                yield f"id: {event['id']}\nevent: {event['type']}\ndata: {json.dumps(payload, sort_keys=True)}\n\n"
            if terminal and cursor >= len(state.events):
                return
