// Cockpit bootstrap: wires the view-model and renderers to the page.

import { CockpitApi, ServiceError } from "./api.js";
import {
  CockpitState, MAX_CANDIDATES, addCandidate, applyPrescription, emptyState,
  isLocked, removeCandidate, setSimulationResults, viewFromState, viewFromTrace,
} from "./model.js";
import {
  renderActionHistory, renderCandidates, renderError, renderTimelines,
  statusBadges,
} from "./render.js";
import type { TracePayload } from "./types.js";

const DEFAULT_FEATURES = ["meanbp", "lactate", "sofa", "heart_rate", "urine_output"];

const state: CockpitState = emptyState();
let api = new CockpitApi(apiBase());
let requestCounter = 0;

function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "http://127.0.0.1:8000";
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function redraw(): void {
  const view = state.view;
  el("error-box").innerHTML = renderError(state.lastError);
  el("badges").innerHTML = view ? statusBadges(view) : "";
  el("timelines").innerHTML = view ? renderTimelines(view, DEFAULT_FEATURES) : "";
  el("history").innerHTML = view ? renderActionHistory(view) : "";
  el("candidate-results").innerHTML = state.results ? renderCandidates(state.results) : "";
  el("drafts").innerHTML = state.drafts.map((d, i) =>
    `<li>vaso ${d.vaso} / fluid ${d.fluid} `
    + `<button class="remove-draft" data-index="${i}">x</button></li>`).join("");

  const locked = isLocked(state);
  for (const id of ["add-candidate", "simulate", "prescribe", "vaso", "fluid"]) {
    (el(id) as HTMLButtonElement).disabled = locked;
  }
  (el("add-candidate") as HTMLButtonElement).disabled =
    locked || state.drafts.length >= MAX_CANDIDATES;
  (el("export-trace") as HTMLButtonElement).disabled = state.view === null
    || state.view.source === "trace";
  el("session-label").textContent = view
    ? `session ${view.sessionId} — hour ${view.hour} — ${view.status}` : "no session";
}

async function guard(work: () => Promise<void>): Promise<void> {
  state.lastError = null;
  try {
    await work();
  } catch (error) {
    if (error instanceof ServiceError) {
      state.lastError = { code: error.code, message: error.message };
    } else {
      state.lastError = { code: "client", message: String(error) };
    }
  }
  redraw();
}

function bind(): void {
  el("new-session").addEventListener("click", () => guard(async () => {
    const seed = Number((el("seed") as HTMLInputElement).value) || 0;
    const payload = await api.createSession(seed);
    state.view = viewFromState(payload);
    state.drafts = [];
    state.results = null;
  }));

  el("add-candidate").addEventListener("click", () => {
    const vaso = Number((el("vaso") as HTMLSelectElement).value);
    const fluid = Number((el("fluid") as HTMLSelectElement).value);
    addCandidate(state, { vaso, fluid });
    redraw();
  });

  el("drafts").addEventListener("click", event => {
    const target = event.target as HTMLElement;
    if (target.classList.contains("remove-draft")) {
      removeCandidate(state, Number(target.dataset.index));
      redraw();
    }
  });

  el("simulate").addEventListener("click", () => guard(async () => {
    if (!state.view || state.drafts.length === 0) return;
    const response = await api.simulate(
      state.view.sessionId,
      state.drafts.map(d => [d.vaso, d.fluid] as [number, number]),
      `sim-${++requestCounter}`);
    setSimulationResults(state, response);
  }));

  el("prescribe").addEventListener("click", () => guard(async () => {
    if (!state.view) return;
    const vaso = Number((el("vaso") as HTMLSelectElement).value);
    const fluid = Number((el("fluid") as HTMLSelectElement).value);
    const response = await api.prescribe(state.view.sessionId, vaso, fluid,
                                         `rx-${++requestCounter}`);
    applyPrescription(state, response.state);
  }));

  el("export-trace").addEventListener("click", () => guard(async () => {
    if (!state.view) return;
    const trace = await api.trace(state.view.sessionId);
    const blob = new Blob([JSON.stringify(trace, null, 2)],
                          { type: "application/json" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = `trace-${state.view.sessionId}.json`;
    link.click();
    URL.revokeObjectURL(link.href);
  }));

  el("load-trace").addEventListener("change", event => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    file.text().then(text => {
      state.view = viewFromTrace(JSON.parse(text) as TracePayload);
      state.drafts = [];
      state.results = null;
      redraw();
    });
  });
}

document.addEventListener("DOMContentLoaded", () => {
  api = new CockpitApi(apiBase());
  bind();
  redraw();
});
