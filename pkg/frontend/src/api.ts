// Thin typed client over the session service. Server errors are surfaced
// verbatim with their machine-readable codes.

import type {
  ApiErrorBody, PrescribeResponse, SimulateResponse, StatePayload, TracePayload,
} from "./types.js";

export class ServiceError extends Error {
  code: string;
  status: number;

  constructor(status: number, body: ApiErrorBody["error"]) {
    super(body.message);
    this.code = body.code;
    this.status = status;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export function actionString(vaso: number, fluid: number): string {
  return `[${vaso},${fluid}]`;
}

export class CockpitApi {
  constructor(private base: string, private fetchFn: FetchLike = fetch) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchFn(`${this.base}${path}`, init);
    const payload = await response.json();
    if (!response.ok) {
      const err = (payload as ApiErrorBody).error
        ?? { code: "unknown", message: JSON.stringify(payload) };
      throw new ServiceError(response.status, err);
    }
    return payload as T;
  }

  createSession(seed: number, maxSteps = 20, patientId?: string): Promise<StatePayload> {
    const body: Record<string, unknown> = patientId
      ? { source: "cohort", patient_id: patientId, seed }
      : { source: "synthetic", seed };
    body.max_steps = maxSteps;
    return this.request("POST", "/sessions", body);
  }

  state(sessionId: string): Promise<StatePayload> {
    return this.request("GET", `/sessions/${sessionId}/state`);
  }

  simulate(sessionId: string, actions: [number, number][],
           requestId?: string): Promise<SimulateResponse> {
    return this.request("POST", `/sessions/${sessionId}/simulate`, {
      actions: actions.map(([v, f]) => actionString(v, f)),
      ...(requestId ? { request_id: requestId } : {}),
    });
  }

  prescribe(sessionId: string, vaso: number, fluid: number,
            requestId?: string): Promise<PrescribeResponse> {
    return this.request("POST", `/sessions/${sessionId}/prescribe`, {
      vasopressor: vaso,
      iv_fluid: fluid,
      ...(requestId ? { request_id: requestId } : {}),
    });
  }

  trace(sessionId: string): Promise<TracePayload> {
    return this.request("GET", `/sessions/${sessionId}/trace`);
  }
}
