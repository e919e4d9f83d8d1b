// Wire types, mirroring the service payloads field for field.  The console
// never derives any of these numbers itself; everything rendered comes off
// the wire.

export interface SubstationInfo {
  id: number;
  x: number;
  y: number;
}

export interface LineInfo {
  id: number;
  from: number;
  to: number;
  thermal_limit: number;
}

export interface ObjectInfo {
  index: number;          // canonical object slot, matches topology vector
  kind: "gen" | "load" | "line_or" | "line_ex";
  id: number;
  substation: number;
}

export interface GridInfo {
  substations: SubstationInfo[];
  lines: LineInfo[];
  objects: ObjectInfo[];
}

export interface ActionInfo {
  index: number;
  substation: number | null;   // null = explicit do-nothing
  object_index: number[];
  busbar: number[];
}

export interface ScenarioEntry {
  id: number;
  days: number;
}

export interface ScenarioManifest {
  scenarios: ScenarioEntry[];
  split: { train?: number[]; validation?: number[]; test?: number[] };
  seed: number | null;
  model: string | null;
}

export interface OutageInfo {
  line: number;
  start: number;
  end: number;
  active: boolean;
}

export interface HistoryEntry {
  step: number;
  action_index: number;
  substation: number | null;
  source: string;
}

export interface AdvisorInfo {
  agent: string;
  action_index: number;
  substation: number | null;
  sim_rho: number | null;
  deliberated: boolean;
}

export type SessionStatus = "running" | "completed" | "failed";

export interface SessionState {
  id: string;
  scenario: number;
  day: number;
  regime: string;
  step: number;
  status: SessionStatus;
  cause: string | null;
  rho_max: number;
  topology: number[];
  loadings: number[];
  line_flow: number[];
  injections: { gen_p: number[]; load_p: number[] };
  disabled_lines: number[];
  outages: OutageInfo[];
  overflow_steps: number[];
  history: HistoryEntry[];
  advisor: AdvisorInfo | null;
}

export interface SimulateResult {
  action_index: number | null;
  rho_max: number;
  game_over: boolean;
  loadings: number[];
  deltas: number[];
}

export interface StreamMessage {
  type: "state";
  step: number;
  rho_max: number;
  topology: number[];
  loadings: number[];
  game_over: boolean;
}

// request bodies
export interface ActionBody {
  action_index?: number;
  substation?: number;
  object_index?: number[];
  busbar?: number[];
}
