// Console wiring: session tab (live SSE), inspector tab, banks tab.

import { changedRows, diffSnapshots } from "./bank.js";
import { ServiceClient } from "./client.js";
import { groupViews, turnRows } from "./inspector.js";
import {
  SessionView,
  applyAnswer,
  applyEvent,
  initialView,
} from "./session.js";
import { streamEvents } from "./sse.js";
import {
  renderAnswerBox,
  renderBankDiff,
  renderConfigPreview,
  renderDownload,
  renderGroupViews,
  renderTranscript,
  renderTurnTable,
} from "./render.js";
import type { SessionEvent } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function mountApp(): void {
  const client = new ServiceClient(
    (byId<HTMLInputElement>("service-url").value || "").replace(/\/$/, ""),
  );

  // --- session tab ---
  let view: SessionView | null = null;

  const repaint = () => {
    if (!view) return;
    renderTranscript(view, byId("transcript"));
    renderAnswerBox(view, byId<HTMLInputElement>("answer-input"), byId<HTMLButtonElement>("answer-send"));
    renderConfigPreview(view, byId("config-preview"));
    renderDownload(view, byId<HTMLAnchorElement>("download-link"));
    byId("session-status").textContent = view.status;
  };

  byId<HTMLButtonElement>("session-start").addEventListener("click", async () => {
    const created = await client.createSession({});
    view = initialView(created.session_id);
    repaint();
    streamEvents(client.eventsUrl(created.session_id), {
      onEvent(raw) {
        const event = { id: raw.id, type: raw.event, ...JSON.parse(raw.data || "{}") } as SessionEvent;
        if (view) {
          view = applyEvent(view, event);
          repaint();
        }
      },
      onReconnect() {
        byId("session-status").textContent = "reconnecting...";
      },
    });
  });

  byId<HTMLButtonElement>("answer-send").addEventListener("click", async () => {
    const input = byId<HTMLInputElement>("answer-input");
    if (!view || !input.value) return;
    await client.postAnswer(view.sessionId, input.value);
    view = applyAnswer(view, input.value);
    input.value = "";
    repaint();
  });

  // --- inspector tab ---
  byId<HTMLButtonElement>("job-load").addEventListener("click", async () => {
    const jobId = byId<HTMLInputElement>("job-id").value.trim();
    const estimator = byId<HTMLSelectElement>("estimator").value as "mean_baseline" | "grpo_std";
    try {
      const listings = await client.getTrajectories(jobId);
      if (listings.length === 0) {
        byId("group-views").textContent = "no trajectories for this job";
        byId("turn-table").textContent = "";
        return;
      }
      renderGroupViews(groupViews(listings, estimator), byId("group-views"));
      renderTurnTable(turnRows(listings[0].trajectory), byId("turn-table"));
    } catch {
      byId("group-views").textContent = "job not found";
    }
  });

  // --- banks tab ---
  byId<HTMLButtonElement>("bank-load").addEventListener("click", async () => {
    const runId = byId<HTMLInputElement>("run-id").value.trim();
    const mount = byId("bank-diffs");
    mount.replaceChildren();
    const { epochs } = await client.listBankEpochs(runId);
    for (let i = 1; i < epochs.length; i++) {
      const prev = await client.getBank(runId, epochs[i - 1]);
      const next = await client.getBank(runId, epochs[i]);
      const header = document.createElement("h3");
      header.textContent = `epoch ${epochs[i - 1]} -> ${epochs[i]}`;
      mount.appendChild(header);
      const pane = document.createElement("div");
      renderBankDiff(changedRows(diffSnapshots(prev, next)), pane);
      mount.appendChild(pane);
    }
  });
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  mountApp();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", mountApp);
}
