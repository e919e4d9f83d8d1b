// SVG schematic of the grid: substations at their station coordinates,
// lines tinted by the loading the service reported.  Pure view: the numbers
// on screen are the numbers off the wire, nothing is recomputed here.

import type { GridInfo, SessionState } from "./types.js";

const SVG = "http://www.w3.org/2000/svg";

export function loadingClass(loading: number, disabled: boolean): string {
  if (disabled) return "line-off";
  if (loading >= 1.0) return "line-red";
  if (loading >= 0.9) return "line-amber";
  return "line-green";
}

function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export interface GridViewOptions {
  onSelect?: (substation: number) => void;
}

export class GridView {
  readonly root: SVGSVGElement;

  constructor(
    private grid: GridInfo,
    private options: GridViewOptions = {},
  ) {
    const xs = grid.substations.map((s) => s.x);
    const ys = grid.substations.map((s) => s.y);
    const pad = 0.8;
    const minX = Math.min(...xs) - pad;
    const minY = Math.min(...ys) - pad;
    const w = Math.max(...xs) - minX + pad;
    const h = Math.max(...ys) - minY + pad;
    this.root = el("svg", {
      viewBox: `${minX} ${minY} ${w} ${h}`,
      class: "grid-view",
      "data-role": "grid",
    });
  }

  render(session: SessionState, selected: number | null): void {
    this.root.replaceChildren();
    const byId = new Map(this.grid.substations.map((s) => [s.id, s]));
    const disabled = new Set(session.disabled_lines);
    const outageLines = new Set(
      session.outages.filter((o) => o.active).map((o) => o.line),
    );

    for (const line of this.grid.lines) {
      const a = byId.get(line.from)!;
      const b = byId.get(line.to)!;
      const loading = session.loadings[line.id] ?? 0;
      const cls = loadingClass(loading, disabled.has(line.id));
      const edge = el("line", {
        x1: String(a.x),
        y1: String(a.y),
        x2: String(b.x),
        y2: String(b.y),
        class: `line ${cls}`,
        "data-line": String(line.id),
        "data-loading": loading.toFixed(4),
      });
      const tip = document.createElementNS(SVG, "title");
      tip.textContent = disabled.has(line.id)
        ? `line ${line.id}: out`
        : `line ${line.id}: ${(loading * 100).toFixed(1)}%`;
      edge.appendChild(tip);
      this.root.appendChild(edge);

      if (disabled.has(line.id)) {
        const badge = el("circle", {
          cx: String((a.x + b.x) / 2),
          cy: String((a.y + b.y) / 2),
          r: "0.14",
          class: outageLines.has(line.id) ? "badge badge-outage" : "badge",
          "data-badge": String(line.id),
        });
        this.root.appendChild(badge);
      }
    }

    for (const sub of this.grid.substations) {
      const split = this.grid.objects.some(
        (o) => o.substation === sub.id && session.topology[o.index] === 2,
      );
      const group = el("g", {
        class:
          "substation" +
          (split ? " substation-split" : "") +
          (selected === sub.id ? " substation-selected" : ""),
        "data-substation": String(sub.id),
      });
      group.appendChild(
        el("circle", { cx: String(sub.x), cy: String(sub.y), r: "0.26" }),
      );
      const label = el("text", {
        x: String(sub.x),
        y: String(sub.y + 0.07),
        class: "substation-label",
        "text-anchor": "middle",
      });
      label.textContent = String(sub.id);
      group.appendChild(label);
      group.addEventListener("click", () => this.options.onSelect?.(sub.id));
      this.root.appendChild(group);
    }
  }
}
