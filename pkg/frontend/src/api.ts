// Thin client over the service API.  Transports are injectable so tests can
// run against a canned network or a live server interchangeably.

import type {
  ActionBody,
  ActionInfo,
  GridInfo,
  ScenarioManifest,
  SessionState,
  SimulateResult,
  StreamMessage,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SocketLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
    private socketFactory: SocketFactory | null = null,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const doc = await res.json();
        if (doc && typeof doc.detail === "string") detail = doc.detail;
      } catch {
        // non-JSON error body, keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  grid(): Promise<GridInfo> {
    return this.request("/api/grid");
  }

  scenarios(): Promise<ScenarioManifest> {
    return this.request("/api/scenarios");
  }

  async actions(): Promise<ActionInfo[]> {
    const doc = await this.request<{ actions: ActionInfo[] }>("/api/actions");
    return doc.actions;
  }

  openSession(
    scenario: number,
    day: number,
    regime: string,
    advisor?: string,
  ): Promise<SessionState> {
    const body: Record<string, unknown> = { scenario, day, regime };
    if (advisor) body.advisor = advisor;
    return this.post("/api/sessions", body);
  }

  session(id: string): Promise<SessionState> {
    return this.request(`/api/sessions/${id}`);
  }

  simulate(id: string, action: ActionBody): Promise<SimulateResult> {
    return this.post(`/api/sessions/${id}/simulate`, action);
  }

  act(id: string, action: ActionBody): Promise<SessionState> {
    return this.post(`/api/sessions/${id}/act`, action);
  }

  auto(id: string, agent: string, steps: number): Promise<SessionState> {
    return this.post(`/api/sessions/${id}/auto`, { agent, steps });
  }

  export(id: string): Promise<unknown> {
    return this.request(`/api/sessions/${id}/export`);
  }

  // Snapshot push channel.  Returns a disposer; silently inert when no
  // socket transport is available (tests that only poll).
  stream(id: string, onMessage: (msg: StreamMessage) => void): () => void {
    const factory =
      this.socketFactory ??
      (typeof WebSocket !== "undefined"
        ? (url: string) => new WebSocket(url) as unknown as SocketLike
        : null);
    if (!factory) return () => undefined;
    // WebSocket needs an absolute URL even when fetch runs off relative ones
    const origin =
      this.base || (typeof location !== "undefined" ? location.origin : "");
    const wsBase = origin.replace(/^http/, "ws");
    const socket = factory(`${wsBase}/api/sessions/${id}/stream`);
    socket.onmessage = (ev) => {
      const msg = JSON.parse(ev.data) as StreamMessage;
      if (msg.type === "state") onMessage(msg);
    };
    return () => socket.close();
  }
}
