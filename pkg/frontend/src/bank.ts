// Entry-level diffs between consecutive experience-bank snapshots.

import type { BankEntry, BankSnapshot } from "./types.js";

export type DiffKind = "added" | "revised" | "removed" | "unchanged";

export interface BankDiffRow {
  kind: DiffKind;
  entry: BankEntry;
  previousText?: string;
}

export function diffSnapshots(prev: BankSnapshot, next: BankSnapshot): BankDiffRow[] {
  const prevById = new Map(prev.entries.map((e) => [e.id, e]));
  const nextIds = new Set(next.entries.map((e) => e.id));
  const rows: BankDiffRow[] = [];

  for (const entry of next.entries) {
    const before = prevById.get(entry.id);
    if (!before) rows.push({ kind: "added", entry });
    else if (before.text !== entry.text)
      rows.push({ kind: "revised", entry, previousText: before.text });
    else rows.push({ kind: "unchanged", entry });
  }
  for (const entry of prev.entries) {
    if (!nextIds.has(entry.id)) rows.push({ kind: "removed", entry });
  }
  return rows;
}

export function changedRows(rows: BankDiffRow[]): BankDiffRow[] {
  return rows.filter((r) => r.kind !== "unchanged");
}
