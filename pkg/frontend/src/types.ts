// Service payload shapes. The cockpit renders these verbatim and performs
// no clinical computation of its own.

export interface Timeline {
  hours: number[];
  features: Record<string, number[]>;
}

export interface Verdict {
  adherent: boolean;
  rules: string[];
  unsafe: string; // "none" | "underdose" | "overdose"
}

export interface StatePayload {
  session_id: string;
  status: string; // "running" | "survived" | "died" | "truncated"
  hour: number;
  step_count: number;
  in_shock: boolean;
  hypoperfusion: boolean;
  current_vaso_level: number;
  cumulative_tev_ml: number;
  static: {
    age: number;
    gender: number;
    weight: number;
    readmission: number;
    comorbidity_index: number;
  };
  actions: [number, number][];
  verdicts: Verdict[];
  timeline: Timeline;
  rendered: string;
}

export interface Candidate {
  action: [number, number];
  levels: { vasopressor: string; iv_fluid: string };
  predicted: { meanbp: number; lactate: number; soft_sofa: number; vent_prob: number };
  deltas: { meanbp: number; lactate: number; soft_sofa: number };
  p_mortality: number;
}

export interface SimulateResponse {
  candidates: Candidate[];
  rendered: string;
}

export interface PrescribeResponse {
  status: string;
  reward: number;
  verdict: Verdict;
  state: StatePayload;
}

export interface TracePayload {
  session_id: string;
  status: string;
  steps: unknown[];
  tool_log: unknown[];
  http_log: unknown[];
  raw_reward: number;
  shaped_reward: number;
  violation_steps: number;
  overrun: boolean;
  timeline: Timeline;
  verdicts: Verdict[];
  actions: [number, number][];
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
