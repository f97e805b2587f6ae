// SessionView: a deterministic reduction of the server's event sequence.
// The transcript mirrors event order exactly; the answer box is enabled
// if and only if the session is awaiting the user.

import type { SessionEvent, SessionStatus } from "./types.js";

export interface TranscriptItem {
  eventId: number;
  kind: "assistant" | "tool" | "question" | "answer" | "config" | "status";
  text: string;
}

export interface SessionView {
  sessionId: string;
  status: SessionStatus;
  transcript: TranscriptItem[];
  pendingQuestion: string | null;
  configPreview: string | null;
  finalYaml: string | null;
  error: string | null;
  lastEventId: number;
}

export function initialView(sessionId: string): SessionView {
  return {
    sessionId,
    status: "running",
    transcript: [],
    pendingQuestion: null,
    configPreview: null,
    finalYaml: null,
    error: null,
    lastEventId: 0,
  };
}

export function answerEnabled(view: SessionView): boolean {
  return view.status === "awaiting_user";
}

/** Pure reducer: view' = applyEvent(view, event). Duplicate ids are ignored. */
export function applyEvent(view: SessionView, event: SessionEvent): SessionView {
  if (event.id <= view.lastEventId) return view;
  const next: SessionView = {
    ...view,
    transcript: [...view.transcript],
    lastEventId: event.id,
  };
  switch (event.type) {
    case "assistant_delta":
      next.transcript.push({ eventId: event.id, kind: "assistant", text: event.content });
      break;
    case "tool_event": {
      const label =
        event.phase === "call"
          ? `→ ${event.name}`
          : `← ${event.name} [${event.status ?? "ok"}]`;
      next.transcript.push({ eventId: event.id, kind: "tool", text: label });
      break;
    }
    case "ask_user":
      next.status = "awaiting_user";
      next.pendingQuestion = event.question;
      next.transcript.push({ eventId: event.id, kind: "question", text: event.question });
      break;
    case "config_preview":
      next.configPreview = event.yaml;
      next.transcript.push({ eventId: event.id, kind: "config", text: "config preview updated" });
      break;
    case "done":
      next.status = "done";
      next.finalYaml = event.yaml;
      next.configPreview = event.yaml;
      next.transcript.push({ eventId: event.id, kind: "status", text: "session complete" });
      break;
    case "failed":
      next.status = "failed";
      next.error = event.error;
      next.transcript.push({ eventId: event.id, kind: "status", text: `failed: ${event.error}` });
      break;
  }
  return next;
}

/** Record the user's submitted answer locally and leave awaiting state. */
export function applyAnswer(view: SessionView, text: string): SessionView {
  return {
    ...view,
    status: "running",
    pendingQuestion: null,
    transcript: [
      ...view.transcript,
      { eventId: view.lastEventId, kind: "answer", text },
    ],
  };
}

/**
 * The YAML offered for download: byte-for-byte the server's canonical
 * emission (the done event carries it verbatim).
 */
export function downloadYaml(view: SessionView): string | null {
  return view.finalYaml;
}
