// Trajectory inspector view models: per-turn timeline rows and the
// side-by-side reward/advantage group view.

import { computeAdvantages } from "./advantages.js";
import type { Estimator, Trajectory, TrajectoryListing, Turn } from "./types.js";

export interface TurnRow {
  index: number;
  kind: Turn["kind"];
  summary: string;
  status: string;
  invalid: boolean;
  tokensIn: number;
  tokensOut: number;
  wallMs: number;
}

function summarize(turn: Turn): string {
  switch (turn.kind) {
    case "assistant_text":
      return turn.payload.content ?? "";
    case "assistant_tool_calls":
      return (turn.payload.tool_calls ?? [])
        .map((c) => `${c.name}(${c.arguments})`)
        .join(", ");
    case "tool_result":
      return `${turn.payload.tool_name ?? "?"}: ${turn.payload.content ?? ""}`;
    case "system_note":
      return turn.payload.note ?? "";
  }
}

export function turnRows(trajectory: Trajectory): TurnRow[] {
  return trajectory.turns.map((turn, index) => ({
    index,
    kind: turn.kind,
    summary: summarize(turn),
    status: turn.kind === "tool_result" ? turn.payload.status ?? "ok" : "",
    invalid: !turn.valid,
    tokensIn: turn.tokens_in,
    tokensOut: turn.tokens_out,
    wallMs: turn.wall_time_ms,
  }));
}

export interface GroupRow {
  ref: string;
  episodeId: string;
  termination: string;
  answer: string | null;
  reward: number;
  advantage: number;
  invalidTurns: number;
}

export interface GroupView {
  taskId: string;
  estimator: Estimator;
  rows: GroupRow[];
}

function taskIdOf(ref: string): string {
  const sep = ref.lastIndexOf("__");
  return sep >= 0 ? ref.slice(0, sep) : ref;
}

/**
 * Build one group view per task: rewards next to advantages computed with
 * the same estimator the export uses, in trajectory-ref order.
 */
export function groupViews(
  listings: TrajectoryListing[],
  estimator: Estimator = "mean_baseline",
): GroupView[] {
  const byTask = new Map<string, TrajectoryListing[]>();
  for (const listing of listings) {
    const task = taskIdOf(listing.ref);
    const bucket = byTask.get(task) ?? [];
    bucket.push(listing);
    byTask.set(task, bucket);
  }

  const views: GroupView[] = [];
  for (const [taskId, group] of [...byTask.entries()].sort()) {
    group.sort((a, b) => (a.ref < b.ref ? -1 : 1));
    const rewards = group.map((g) => g.trajectory.reward ?? 0);
    const advantages = computeAdvantages(rewards, estimator);
    views.push({
      taskId,
      estimator,
      rows: group.map((g, i) => ({
        ref: g.ref,
        episodeId: g.trajectory.episode_id,
        termination: g.trajectory.termination,
        answer: g.trajectory.final_answer,
        reward: rewards[i],
        advantage: advantages[i],
        invalidTurns: g.trajectory.turns.filter((t) => !t.valid).length,
      })),
    });
  }
  return views;
}
