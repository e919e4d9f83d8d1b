// View state and the rules for mutating it.  All physics lives server-side:
// the store only records what the service said and which candidate the
// operator is sketching.

import { ApiClient } from "./api.js";
import type {
  ActionBody,
  ActionInfo,
  GridInfo,
  ScenarioManifest,
  SessionState,
  SimulateResult,
  StreamMessage,
} from "./types.js";

export interface RhoPoint {
  step: number;
  rho_max: number;
}

export interface Candidate {
  substation: number;
  // busbar per canonical object index of that substation, 1 or 2; disabled
  // objects are carried as-is and excluded from the assignment sent
  busbar: Map<number, number>;
}

type Listener = () => void;

function assignmentMatches(candidate: number[], table: number[]): boolean {
  if (candidate.length !== table.length) return false;
  let straight = true;
  let mirrored = true;
  for (let i = 0; i < candidate.length; i++) {
    if (candidate[i] !== table[i]) straight = false;
    if (candidate[i] !== 3 - (table[i] as number)) mirrored = false;
  }
  return straight || mirrored;
}

export class SessionStore {
  grid: GridInfo | null = null;
  actions: ActionInfo[] = [];
  manifest: ScenarioManifest | null = null;
  session: SessionState | null = null;
  candidate: Candidate | null = null;
  whatIf: SimulateResult | null = null;
  rhoHistory: RhoPoint[] = [];
  connectionLive = false;
  lastError: string | null = null;

  private whatIfCache = new Map<string, SimulateResult>();
  private listeners: Listener[] = [];
  private closeStream: (() => void) | null = null;

  constructor(public api: ApiClient) {}

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit() {
    for (const fn of this.listeners) fn();
  }

  async loadStatics(): Promise<void> {
    [this.grid, this.actions, this.manifest] = await Promise.all([
      this.api.grid(),
      this.api.actions(),
      this.api.scenarios(),
    ]);
    this.emit();
  }

  async open(
    scenario: number,
    day: number,
    regime: string,
    advisor?: string,
  ): Promise<void> {
    this.closeStream?.();
    const session = await this.api.openSession(scenario, day, regime, advisor);
    this.session = session;
    this.candidate = null;
    this.whatIf = null;
    this.whatIfCache.clear();
    this.rhoHistory = [{ step: session.step, rho_max: session.rho_max }];
    this.closeStream = this.api.stream(session.id, (msg) => this.onSnapshot(msg));
    this.connectionLive = this.closeStream !== null;
    this.emit();
  }

  // The push channel replays snapshots in emission order, but a large /auto
  // response lands before its per-step snapshots drain, so points arrive out
  // of order.  Keep the trace sorted by step, first writer wins.
  private insertPoint(step: number, rho_max: number) {
    let i = this.rhoHistory.length;
    while (i > 0 && (this.rhoHistory[i - 1] as RhoPoint).step > step) i--;
    if (i > 0 && (this.rhoHistory[i - 1] as RhoPoint).step === step) return;
    this.rhoHistory.splice(i, 0, { step, rho_max });
  }

  private onSnapshot(msg: StreamMessage) {
    this.insertPoint(msg.step, msg.rho_max);
    this.emit();
  }

  private applySession(session: SessionState) {
    this.session = session;
    this.insertPoint(session.step, session.rho_max);
    this.candidate = null;
    this.whatIf = null;
    this.emit();
  }

  // ------------------------------------------------ candidate construction

  selectSubstation(id: number | null) {
    if (id === null || !this.grid || !this.session) {
      this.candidate = null;
      this.whatIf = null;
      this.emit();
      return;
    }
    const busbar = new Map<number, number>();
    for (const obj of this.grid.objects) {
      if (obj.substation !== id) continue;
      const current = this.session.topology[obj.index] as number;
      busbar.set(obj.index, current);
    }
    this.candidate = { substation: id, busbar };
    this.whatIf = null;
    this.emit();
  }

  toggleObject(objectIndex: number) {
    if (!this.candidate) return;
    const current = this.candidate.busbar.get(objectIndex);
    if (current !== 1 && current !== 2) return; // disabled objects stay put
    this.candidate.busbar.set(objectIndex, current === 1 ? 2 : 1);
    this.whatIf = null;
    this.emit();
  }

  /** The sketched assignment as a request body, enabled objects only. */
  candidateBody(): ActionBody | null {
    if (!this.candidate) return null;
    const object_index: number[] = [];
    const busbar: number[] = [];
    for (const [idx, b] of [...this.candidate.busbar.entries()].sort(
      (a, b2) => a[0] - b2[0],
    )) {
      if (b === 1 || b === 2) {
        object_index.push(idx);
        busbar.push(b);
      }
    }
    if (object_index.length === 0) return null;
    return { substation: this.candidate.substation, object_index, busbar };
  }

  /**
   * Table index the candidate encodes, or null when it is not a member of
   * the enumerated action set (then simulate/apply stay disabled).  Matching
   * is positional with mirror equivalence; no electrical reasoning here.
   */
  candidateIndex(): number | null {
    const body = this.candidateBody();
    if (!body) return null;
    for (const action of this.actions) {
      if (action.substation !== body.substation) continue;
      if (
        assignmentMatches(
          body.busbar as number[],
          action.busbar,
        ) &&
        action.object_index.every((v, i) => v === body.object_index?.[i]) &&
        action.object_index.length === body.object_index?.length
      ) {
        return action.index;
      }
    }
    // unchanged assignment is the explicit do-nothing
    if (this.isCandidateCurrent()) return 0;
    return null;
  }

  isCandidateCurrent(): boolean {
    if (!this.candidate || !this.session) return false;
    for (const [idx, b] of this.candidate.busbar.entries()) {
      if (this.session.topology[idx] !== b) return false;
    }
    return true;
  }

  // --------------------------------------------------------- server calls

  async simulateCandidate(): Promise<void> {
    if (!this.session) return;
    const body = this.candidateBody();
    if (!body) return;
    const key = `${this.session.step}:${JSON.stringify(body)}`;
    const cached = this.whatIfCache.get(key);
    if (cached) {
      this.whatIf = cached;
      this.emit();
      return;
    }
    try {
      const result = await this.api.simulate(this.session.id, body);
      this.whatIfCache.set(key, result);
      this.whatIf = result;
      this.lastError = null;
    } catch (err) {
      this.lastError = String((err as Error).message ?? err);
    }
    this.emit();
  }

  async simulateIndex(actionIndex: number): Promise<SimulateResult | null> {
    if (!this.session) return null;
    const key = `${this.session.step}:#${actionIndex}`;
    const cached = this.whatIfCache.get(key);
    if (cached) return cached;
    const result = await this.api.simulate(this.session.id, {
      action_index: actionIndex,
    });
    this.whatIfCache.set(key, result);
    return result;
  }

  async applyCandidate(): Promise<void> {
    if (!this.session) return;
    const body = this.candidateBody();
    if (!body) return;
    await this.actBody(body);
  }

  async actIndex(actionIndex: number): Promise<void> {
    await this.actBody({ action_index: actionIndex });
  }

  private async actBody(body: ActionBody): Promise<void> {
    if (!this.session) return;
    try {
      const session = await this.api.act(this.session.id, body);
      this.lastError = null;
      this.applySession(session);
    } catch (err) {
      this.lastError = String((err as Error).message ?? err);
      this.emit();
    }
  }

  async autoSteps(agent: string, steps: number): Promise<void> {
    if (!this.session) return;
    try {
      const session = await this.api.auto(this.session.id, agent, steps);
      this.lastError = null;
      this.applySession(session);
    } catch (err) {
      this.lastError = String((err as Error).message ?? err);
      this.emit();
    }
  }

  async refresh(): Promise<void> {
    if (!this.session) return;
    this.applySession(await this.api.session(this.session.id));
  }

  dispose() {
    this.closeStream?.();
    this.closeStream = null;
  }
}
