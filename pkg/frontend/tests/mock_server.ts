// Canned network for the console tests: a FetchLike that serves fixture
// payloads and records every request, plus a hand-cranked socket.

import type { FetchLike, SocketLike } from "../src/api.js";
import type {
  ActionInfo,
  GridInfo,
  SessionState,
  SimulateResult,
  StreamMessage,
} from "../src/types.js";

// three substations in a row: gen - load - load, two lines
export const tinyGrid: GridInfo = {
  substations: [
    { id: 0, x: 0.0, y: 0.0 },
    { id: 1, x: 2.0, y: 0.0 },
    { id: 2, x: 4.0, y: 1.0 },
  ],
  lines: [
    { id: 0, from: 0, to: 1, thermal_limit: 10 },
    { id: 1, from: 1, to: 2, thermal_limit: 5 },
  ],
  // canonical block order: gens, loads, line origins, line ends
  objects: [
    { index: 0, kind: "gen", id: 0, substation: 0 },
    { index: 1, kind: "load", id: 0, substation: 1 },
    { index: 2, kind: "load", id: 1, substation: 2 },
    { index: 3, kind: "line_or", id: 0, substation: 0 },
    { index: 4, kind: "line_or", id: 1, substation: 1 },
    { index: 5, kind: "line_ex", id: 0, substation: 1 },
    { index: 6, kind: "line_ex", id: 1, substation: 2 },
  ],
};

export const tinyActions: ActionInfo[] = [
  { index: 0, substation: null, object_index: [], busbar: [] },
  // split substation 1: line 1 origin alone on busbar 1, load + line 0 end on 2
  { index: 1, substation: 1, object_index: [1, 4, 5], busbar: [2, 1, 2] },
];

export function session(overrides: Partial<SessionState> = {}): SessionState {
  return {
    id: "abc123",
    scenario: 0,
    day: 0,
    regime: "full",
    step: 0,
    status: "running",
    cause: null,
    rho_max: 0.62,
    topology: [1, 1, 1, 1, 1, 1, 1],
    loadings: [0.62, 0.31],
    line_flow: [6.2, 1.55],
    injections: { gen_p: [7.75], load_p: [6.2, 1.55] },
    disabled_lines: [],
    outages: [],
    overflow_steps: [0, 0],
    history: [],
    advisor: null,
    ...overrides,
  };
}

export interface Call {
  method: string;
  path: string;
  body: unknown;
}

export class MockServer {
  calls: Call[] = [];
  sessionResponses: SessionState[] = [session()];
  simulateResult: SimulateResult = {
    action_index: 1,
    rho_max: 0.48,
    game_over: false,
    loadings: [0.48, 0.3],
    deltas: [-0.14, -0.01],
  };
  failNext: { status: number; detail: string } | null = null;
  sockets: MockSocket[] = [];

  private nextSession = 0;

  readonly fetchFn: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(init.body as string) : null;
    this.calls.push({ method, path, body });

    if (this.failNext) {
      const { status, detail } = this.failNext;
      this.failNext = null;
      return jsonResponse(status, { detail });
    }
    if (path === "/api/grid") return jsonResponse(200, tinyGrid);
    if (path === "/api/actions")
      return jsonResponse(200, { count: tinyActions.length, actions: tinyActions });
    if (path === "/api/scenarios")
      return jsonResponse(200, {
        scenarios: [{ id: 0, days: 2 }],
        split: { test: [0] },
        seed: 7,
        model: null,
      });
    if (path === "/api/sessions" && method === "POST")
      return jsonResponse(201, this.serveSession());
    if (/^\/api\/sessions\/[^/]+$/.test(path))
      return jsonResponse(200, this.serveSession());
    if (path.endsWith("/simulate")) return jsonResponse(200, this.simulateResult);
    if (path.endsWith("/act") || path.endsWith("/auto"))
      return jsonResponse(200, this.serveSession());
    if (path.endsWith("/export"))
      return jsonResponse(200, { session: this.serveSession(), snapshots: [] });
    return jsonResponse(404, { detail: `no route ${path}` });
  };

  readonly socketFactory = (url: string): SocketLike => {
    const socket = new MockSocket(url);
    this.sockets.push(socket);
    return socket;
  };

  private serveSession(): SessionState {
    const k = Math.min(this.nextSession, this.sessionResponses.length - 1);
    this.nextSession += 1;
    return this.sessionResponses[k] as SessionState;
  }

  push(msg: StreamMessage) {
    for (const socket of this.sockets) {
      socket.onmessage?.({ data: JSON.stringify(msg) });
    }
  }
}

export class MockSocket implements SocketLike {
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  closed = false;

  constructor(public url: string) {}

  close() {
    this.closed = true;
    this.onclose?.();
  }
}

function jsonResponse(status: number, doc: unknown): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "content-type": "application/json" },
  });
}
