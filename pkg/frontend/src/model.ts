// Cockpit view-model: pure state transitions, no DOM and no clinical math.
// Every number it exposes is a field of a service response.

import type {
  Candidate, SimulateResponse, StatePayload, TracePayload, Timeline, Verdict,
} from "./types.js";

export const MAX_CANDIDATES = 3;

export interface CandidateDraft {
  vaso: number;
  fluid: number;
}

export interface SessionView {
  sessionId: string;
  status: string;
  hour: number;
  inShock: boolean;
  hypoperfusion: boolean;
  timeline: Timeline;
  actions: [number, number][];
  verdicts: Verdict[];
  locked: boolean;
  source: "live" | "trace";
}

export interface CockpitState {
  view: SessionView | null;
  drafts: CandidateDraft[];
  results: Candidate[] | null;
  lastError: { code: string; message: string } | null;
}

export function emptyState(): CockpitState {
  return { view: null, drafts: [], results: null, lastError: null };
}

export function viewFromState(payload: StatePayload): SessionView {
  return {
    sessionId: payload.session_id,
    status: payload.status,
    hour: payload.hour,
    inShock: payload.in_shock,
    hypoperfusion: payload.hypoperfusion,
    timeline: payload.timeline,
    actions: payload.actions,
    verdicts: payload.verdicts,
    locked: payload.status !== "running",
    source: "live",
  };
}

export function viewFromTrace(trace: TracePayload): SessionView {
  return {
    sessionId: trace.session_id,
    status: trace.status,
    hour: trace.timeline.hours[trace.timeline.hours.length - 1] ?? 0,
    inShock: false,
    hypoperfusion: false,
    timeline: trace.timeline,
    actions: trace.actions,
    verdicts: trace.verdicts,
    locked: true,
    source: "trace",
  };
}

export function isLocked(state: CockpitState): boolean {
  return state.view === null || state.view.locked;
}

/** Append a candidate pair; the builder blocks at three. */
export function addCandidate(state: CockpitState, draft: CandidateDraft): boolean {
  if (state.drafts.length >= MAX_CANDIDATES) return false;
  if (![0, 1, 2, 3, 4].includes(draft.vaso) || ![0, 1, 2, 3, 4].includes(draft.fluid)) {
    return false;
  }
  state.drafts.push(draft);
  return true;
}

export function removeCandidate(state: CockpitState, index: number): void {
  state.drafts.splice(index, 1);
}

export function setSimulationResults(state: CockpitState, response: SimulateResponse): void {
  state.results = response.candidates;
}

/** After a commit the candidate panel clears and the timeline is replaced by
 * the server's view of the session. */
export function applyPrescription(state: CockpitState, payload: StatePayload): void {
  state.view = viewFromState(payload);
  state.drafts = [];
  state.results = null;
}

export interface TimelinePoint {
  hour: number;
  value: number;
}

export function timelinePoints(view: SessionView, feature: string): TimelinePoint[] {
  const series = view.timeline.features[feature] ?? [];
  return series.map((value, i) => ({ hour: view.timeline.hours[i], value }));
}

export function featureNames(view: SessionView): string[] {
  return Object.keys(view.timeline.features);
}
