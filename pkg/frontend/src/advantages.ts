// Group-relative advantage estimators, mirroring the service's export math
// so the inspector can label groups without extra endpoints.

import type { Estimator } from "./types.js";

export function meanBaseline(rewards: number[]): number[] {
  const mu = rewards.reduce((a, b) => a + b, 0) / rewards.length;
  return rewards.map((r) => r - mu);
}

export function grpoStd(rewards: number[]): number[] {
  const mu = rewards.reduce((a, b) => a + b, 0) / rewards.length;
  const variance = rewards.reduce((a, r) => a + (r - mu) ** 2, 0) / rewards.length;
  const sigma = Math.sqrt(variance);
  if (sigma === 0) return rewards.map(() => 0);
  return rewards.map((r) => (r - mu) / sigma);
}

export function computeAdvantages(rewards: number[], estimator: Estimator): number[] {
  if (rewards.length < 2) throw new Error(`group size ${rewards.length} < 2`);
  return estimator === "grpo_std" ? grpoStd(rewards) : meanBaseline(rewards);
}
