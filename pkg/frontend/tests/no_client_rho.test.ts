// The console is a window onto the service, not a second solver.  These
// tests pin that down: every loading figure on screen is the wire value
// verbatim, even when the fixture makes the wire values physically
// impossible, and no request body ever carries electrical quantities.
//
// The fixture is deliberately self-inconsistent: line_flow / thermal_limit
// would give 62% and 31%, but the served loadings say 12.3% and 777%.  A
// client that recomputed anything from flows and limits would show the
// former; the console must show the latter.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { GridView } from "../src/grid_view.js";
import { Panel } from "../src/panel.js";
import { SessionStore } from "../src/store.js";
import { MockServer, session } from "./mock_server.js";

const ELECTRICAL = /rho|loading|flow|inject|theta|susceptance|thermal|power/i;

describe("no client-side loading computation", () => {
  let server: MockServer;
  let store: SessionStore;

  beforeEach(async () => {
    server = new MockServer();
    server.sessionResponses = [
      session({
        rho_max: 3.14159,
        loadings: [0.123, 7.77],
        line_flow: [6.2, 1.55],
        injections: { gen_p: [0.0], load_p: [0.0, 0.0] },
      }),
    ];
    const client = new ApiClient("http://test", server.fetchFn, server.socketFactory);
    store = new SessionStore(client);
    await store.loadStatics();
    await store.open(0, 0, "full");
  });

  it("renders the served rho_max verbatim, however absurd", () => {
    const panel = new Panel(store);
    document.body.appendChild(panel.root);
    panel.render();
    const rho = panel.root.querySelector('[data-role="rho-max"]');
    expect(rho?.textContent).toBe("max loading 314.2%");
    panel.root.remove();
  });

  it("tints and labels lines from served loadings, not from flow over limit", () => {
    const view = new GridView(store.grid!);
    document.body.appendChild(view.root);
    view.render(store.session!, null);

    const line0 = view.root.querySelector('[data-line="0"]')!;
    const line1 = view.root.querySelector('[data-line="1"]')!;
    // flow/limit would be 0.62 and 0.31; the wire said otherwise
    expect(line0.getAttribute("data-loading")).toBe("0.1230");
    expect(line1.getAttribute("data-loading")).toBe("7.7700");
    expect(line0.getAttribute("class")).toContain("line-green");
    expect(line1.getAttribute("class")).toContain("line-red");
    view.root.remove();
  });

  it("shows what-if loadings straight off the simulate response", async () => {
    server.simulateResult = {
      action_index: 1,
      rho_max: 0.271828,
      game_over: false,
      loadings: [0.271828, 0.1],
      deltas: [-2.869762, 0.0],
    };
    store.selectSubstation(1);
    store.toggleObject(4);
    await store.simulateCandidate();

    const panel = new Panel(store);
    document.body.appendChild(panel.root);
    panel.render();
    const whatIf = panel.root.querySelector('[data-role="whatif-rho"]');
    expect(whatIf?.textContent).toBe("would be 27.2% (-287.0 pts)");
    panel.root.remove();
  });

  it("carries wire rho values into the trace untouched", () => {
    server.push({
      type: "state",
      step: 7,
      rho_max: 123.456,
      topology: [],
      loadings: [],
      game_over: false,
    });
    expect(store.rhoHistory.at(-1)).toEqual({ step: 7, rho_max: 123.456 });
  });

  it("never sends electrical quantities in any request", async () => {
    store.selectSubstation(1);
    store.toggleObject(4);
    await store.simulateCandidate();
    await store.applyCandidate();
    await store.autoSteps("greedy", 12);

    expect(server.calls.length).toBeGreaterThanOrEqual(7);
    for (const call of server.calls) {
      if (call.body === null) continue;
      for (const key of Object.keys(call.body as Record<string, unknown>)) {
        expect(key).not.toMatch(ELECTRICAL);
      }
      // values too: assignments and counts only, nothing resembling physics
      const flat = JSON.stringify(call.body);
      expect(flat).not.toMatch(ELECTRICAL);
    }
  });
});
