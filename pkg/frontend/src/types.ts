// Wire types mirroring the rollout-service REST/SSE API.

export type SessionStatus = "running" | "awaiting_user" | "done" | "failed";

export type SessionEvent =
  | { id: number; type: "assistant_delta"; content: string }
  | { id: number; type: "tool_event"; phase: "call" | "result"; name: string; tool_id?: string; status?: string }
  | { id: number; type: "ask_user"; question: string }
  | { id: number; type: "config_preview"; yaml: string }
  | { id: number; type: "done"; yaml: string }
  | { id: number; type: "failed"; error: string };

export interface SessionInfo {
  session_id: string;
  status: SessionStatus;
  pending_question: string | null;
  final_yaml: string | null;
  error: string | null;
  event_count: number;
}

export interface TurnPayloadToolCall {
  id: string;
  name: string;
  arguments: string;
}

export interface Turn {
  kind: "assistant_text" | "assistant_tool_calls" | "tool_result" | "system_note";
  payload: {
    content?: string;
    tool_calls?: TurnPayloadToolCall[];
    id?: string;
    tool_name?: string;
    status?: string;
    note?: string;
  };
  tokens_in: number;
  tokens_out: number;
  wall_time_ms: number;
  valid: boolean;
  token_source: string;
}

export interface Trajectory {
  episode_id: string;
  task: string;
  turns: Turn[];
  final_answer: string | null;
  termination: string;
  config_fingerprint: string;
  reward: number | null;
  wall_time_ms: number;
}

export interface TrajectoryListing {
  ref: string;
  trajectory: Trajectory;
}

export interface JobInfo {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  group_size: number;
  temperature: number;
  progress: { total_episodes: number; completed: number; failed: number };
  failure_cause: string | null;
}

export interface BankEntry {
  id: string;
  text: string;
  epoch_added: number;
  last_modified_epoch: number;
  origin_task_id: string;
}

export interface BankSnapshot {
  capacity: number;
  next_id: number;
  entries: BankEntry[];
}

export type Estimator = "mean_baseline" | "grpo_std";
