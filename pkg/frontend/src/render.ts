// DOM helpers: render view models into plain elements. No framework.

import type { BankDiffRow } from "./bank.js";
import type { GroupView, TurnRow } from "./inspector.js";
import type { SessionView } from "./session.js";
import { answerEnabled } from "./session.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTranscript(view: SessionView, mount: HTMLElement): void {
  mount.replaceChildren();
  for (const item of view.transcript) {
    mount.appendChild(el("div", `line line-${item.kind}`, item.text));
  }
  mount.scrollTop = mount.scrollHeight;
}

export function renderAnswerBox(
  view: SessionView,
  input: HTMLInputElement,
  button: HTMLButtonElement,
): void {
  const enabled = answerEnabled(view);
  input.disabled = !enabled;
  button.disabled = !enabled;
  input.placeholder = enabled
    ? view.pendingQuestion ?? "answer"
    : "waiting for a question...";
}

export function renderConfigPreview(view: SessionView, pane: HTMLElement): void {
  pane.textContent = view.configPreview ?? "(no config yet)";
}

export function renderDownload(view: SessionView, link: HTMLAnchorElement): void {
  if (view.finalYaml === null) {
    link.classList.add("hidden");
    return;
  }
  const blob = new Blob([view.finalYaml], { type: "application/yaml" });
  link.href = URL.createObjectURL(blob);
  link.download = "agent.yaml";
  link.classList.remove("hidden");
}

export function renderTurnTable(rows: TurnRow[], mount: HTMLElement): void {
  const table = el("table", "turns");
  const head = el("tr");
  for (const h of ["#", "kind", "summary", "status", "in", "out", "ms"]) {
    head.appendChild(el("th", undefined, h));
  }
  table.appendChild(head);
  for (const row of rows) {
    const tr = el("tr", row.invalid ? "invalid-turn" : undefined);
    tr.appendChild(el("td", undefined, String(row.index)));
    tr.appendChild(el("td", undefined, row.kind));
    tr.appendChild(el("td", "summary", row.summary.slice(0, 160)));
    tr.appendChild(el("td", undefined, row.status));
    tr.appendChild(el("td", undefined, String(row.tokensIn)));
    tr.appendChild(el("td", undefined, String(row.tokensOut)));
    tr.appendChild(el("td", undefined, String(row.wallMs)));
    table.appendChild(tr);
  }
  mount.replaceChildren(table);
}

export function renderGroupViews(views: GroupView[], mount: HTMLElement): void {
  mount.replaceChildren();
  for (const view of views) {
    const section = el("section", "group");
    section.appendChild(el("h3", undefined, `${view.taskId} (${view.estimator})`));
    const table = el("table", "group-table");
    const head = el("tr");
    for (const h of ["trajectory", "termination", "answer", "reward", "advantage", "invalid turns"]) {
      head.appendChild(el("th", undefined, h));
    }
    table.appendChild(head);
    for (const row of view.rows) {
      const tr = el("tr");
      tr.appendChild(el("td", undefined, row.ref));
      tr.appendChild(el("td", undefined, row.termination));
      tr.appendChild(el("td", undefined, row.answer ?? ""));
      tr.appendChild(el("td", undefined, row.reward.toFixed(2)));
      tr.appendChild(el("td", "advantage", row.advantage.toFixed(4)));
      tr.appendChild(el("td", undefined, String(row.invalidTurns)));
      table.appendChild(tr);
    }
    section.appendChild(table);
    mount.appendChild(section);
  }
}

export function renderBankDiff(rows: BankDiffRow[], mount: HTMLElement): void {
  mount.replaceChildren();
  for (const row of rows) {
    const div = el("div", `bank-row bank-${row.kind}`);
    div.appendChild(el("span", "bank-id", row.entry.id));
    if (row.kind === "revised" && row.previousText) {
      const old = el("span", "bank-old", row.previousText);
      div.appendChild(old);
    }
    div.appendChild(el("span", "bank-text", row.entry.text));
    mount.appendChild(div);
  }
  if (rows.length === 0) mount.appendChild(el("div", "empty", "no changes in this epoch"));
}
