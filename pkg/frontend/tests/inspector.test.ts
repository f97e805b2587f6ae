import { describe, expect, it } from "vitest";

import { computeAdvantages, grpoStd, meanBaseline } from "../src/advantages.js";
import { groupViews, turnRows } from "../src/inspector.js";
import type { Trajectory, TrajectoryListing, Turn } from "../src/types.js";

function turn(partial: Partial<Turn>): Turn {
  return {
    kind: "assistant_text",
    payload: { content: "x" },
    tokens_in: 3,
    tokens_out: 5,
    wall_time_ms: 12,
    valid: true,
    token_source: "estimate",
    ...partial,
  };
}

function trajectory(id: string, reward: number, turns: Turn[] = [turn({})]): Trajectory {
  return {
    episode_id: id,
    task: "q",
    turns,
    final_answer: "a",
    termination: "answered",
    config_fingerprint: "fp",
    reward,
    wall_time_ms: 100,
  };
}

describe("advantage mirrors", () => {
  it("mean_baseline matches the export values for [1,0,0,0,1]", () => {
    // same arithmetic the service export uses: A_i = r_i - mean
    expect(meanBaseline([1, 0, 0, 0, 1])).toEqual([0.6, -0.4, -0.4, -0.4, 0.6]);
  });

  it("grpo_std divides by population std", () => {
    const result = grpoStd([1, 0, 0, 0, 1]);
    expect(result[0]).toBeCloseTo(1.2247, 4);
    expect(result[1]).toBeCloseTo(-0.8165, 4);
  });

  it("uniform groups are all zeros", () => {
    expect(grpoStd([1, 1, 1])).toEqual([0, 0, 0]);
  });

  it("rejects singleton groups", () => {
    expect(() => computeAdvantages([1], "mean_baseline")).toThrow();
  });
});

describe("turn rows", () => {
  it("flags invalid turns for highlighting", () => {
    const rows = turnRows(
      trajectory("e", 1, [
        turn({
          kind: "assistant_tool_calls",
          payload: { tool_calls: [{ id: "c1", name: "ghost", arguments: "{}" }] },
          valid: false,
        }),
        turn({
          kind: "tool_result",
          payload: { id: "c1", tool_name: "ghost", status: "invalid", content: "unknown tool" },
        }),
        turn({}),
      ]),
    );
    expect(rows.map((r) => r.invalid)).toEqual([true, false, false]);
    expect(rows[1].status).toBe("invalid");
    expect(rows[0].summary).toContain("ghost");
  });

  it("carries token and latency columns", () => {
    const rows = turnRows(trajectory("e", 1));
    expect(rows[0]).toMatchObject({ tokensIn: 3, tokensOut: 5, wallMs: 12 });
  });
});

describe("group views", () => {
  it("shows rewards and advantages side by side, matching export math", () => {
    const listings: TrajectoryListing[] = [1, 0, 0, 0, 1].map((reward, g) => ({
      ref: `t0__${g}`,
      trajectory: trajectory(`e${g}`, reward),
    }));
    const [view] = groupViews(listings, "mean_baseline");
    expect(view.taskId).toBe("t0");
    expect(view.rows.map((r) => r.reward)).toEqual([1, 0, 0, 0, 1]);
    expect(view.rows.map((r) => r.advantage)).toEqual([0.6, -0.4, -0.4, -0.4, 0.6]);
  });

  it("groups by task id from the trajectory ref", () => {
    const listings: TrajectoryListing[] = [
      { ref: "a__0", trajectory: trajectory("a0", 1) },
      { ref: "a__1", trajectory: trajectory("a1", 0) },
      { ref: "b__0", trajectory: trajectory("b0", 0) },
      { ref: "b__1", trajectory: trajectory("b1", 1) },
    ];
    const views = groupViews(listings);
    expect(views.map((v) => v.taskId)).toEqual(["a", "b"]);
    expect(views[0].rows.map((r) => r.advantage)).toEqual([0.5, -0.5]);
  });
});
