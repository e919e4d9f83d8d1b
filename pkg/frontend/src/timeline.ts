// Day timeline: max-loading trace from the push snapshots, action markers
// from the session history, shaded outage windows.

import type { SessionState } from "./types.js";
import type { RhoPoint } from "./store.js";

const SVG = "http://www.w3.org/2000/svg";
const STEPS = 288;

function el(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export class Timeline {
  readonly root: SVGSVGElement;
  private readonly width = 288;
  private readonly height = 60;

  constructor() {
    this.root = el("svg", {
      viewBox: `0 0 ${this.width} ${this.height}`,
      preserveAspectRatio: "none",
      class: "timeline",
      "data-role": "timeline",
    }) as SVGSVGElement;
  }

  private y(rho: number): number {
    const top = 2.0; // hard limit pinned to the top edge
    const clamped = Math.min(rho, top);
    return this.height - (clamped / top) * this.height;
  }

  render(session: SessionState, history: RhoPoint[]): void {
    this.root.replaceChildren();

    for (const outage of session.outages) {
      this.root.appendChild(
        el("rect", {
          x: String(outage.start),
          y: "0",
          width: String(outage.end - outage.start),
          height: String(this.height),
          class: outage.active ? "outage-span outage-active" : "outage-span",
          "data-outage-line": String(outage.line),
        }),
      );
    }

    for (const rho of [1.0, 2.0]) {
      this.root.appendChild(
        el("line", {
          x1: "0",
          y1: String(this.y(rho)),
          x2: String(this.width),
          y2: String(this.y(rho)),
          class: rho >= 2.0 ? "limit limit-hard" : "limit",
        }),
      );
    }

    if (history.length > 0) {
      const points = history
        .map((p) => `${(p.step / STEPS) * this.width},${this.y(p.rho_max)}`)
        .join(" ");
      this.root.appendChild(
        el("polyline", { points, class: "rho-trace", "data-points": String(history.length) }),
      );
    }

    for (const entry of session.history) {
      if (entry.action_index === 0) continue;
      this.root.appendChild(
        el("line", {
          x1: String((entry.step / STEPS) * this.width),
          y1: "0",
          x2: String((entry.step / STEPS) * this.width),
          y2: String(this.height),
          class: "action-marker",
          "data-action-step": String(entry.step),
        }),
      );
    }

    const cursor = (session.step / STEPS) * this.width;
    this.root.appendChild(
      el("line", {
        x1: String(cursor),
        y1: "0",
        x2: String(cursor),
        y2: String(this.height),
        class: "cursor",
      }),
    );
  }
}
