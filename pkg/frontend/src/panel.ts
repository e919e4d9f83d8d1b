// Right-hand panel: substation detail with the candidate assignment under
// construction, what-if results, advisor row, and drive controls.

import { SessionStore } from "./store.js";
import type { ObjectInfo } from "./types.js";

const KIND_LABEL: Record<ObjectInfo["kind"], string> = {
  gen: "generator",
  load: "load",
  line_or: "line out",
  line_ex: "line in",
};

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export class Panel {
  readonly root: HTMLElement;

  constructor(private store: SessionStore) {
    this.root = h("div", { class: "panel", "data-role": "panel" });
  }

  render(): void {
    this.root.replaceChildren();
    const { session, grid, candidate } = this.store;
    if (!session || !grid) return;

    this.root.appendChild(this.statusBlock());

    if (candidate) {
      this.root.appendChild(this.candidateBlock());
    } else {
      this.root.appendChild(
        h("p", { class: "hint" }, "select a substation to sketch a switch"),
      );
    }

    this.root.appendChild(this.advisorBlock());
    this.root.appendChild(this.driveBlock());

    if (this.store.lastError) {
      this.root.appendChild(
        h("p", { class: "error", "data-role": "error" }, this.store.lastError),
      );
    }
  }

  private statusBlock(): HTMLElement {
    const s = this.store.session!;
    const block = h("div", { class: "status", "data-role": "status" });
    block.appendChild(
      h("h2", {}, `scenario ${s.scenario} day ${s.day} (${s.regime})`),
    );
    const state =
      s.status === "running"
        ? `step ${s.step}/288`
        : s.status === "completed"
          ? "day completed"
          : `failed at step ${s.step}: ${s.cause ?? "unknown"}`;
    block.appendChild(h("p", { class: `state state-${s.status}` }, state));
    block.appendChild(
      h(
        "p",
        { class: "rho", "data-role": "rho-max" },
        `max loading ${(s.rho_max * 100).toFixed(1)}%`,
      ),
    );
    return block;
  }

  private candidateBlock(): HTMLElement {
    const store = this.store;
    const grid = store.grid!;
    const session = store.session!;
    const candidate = store.candidate!;
    const block = h("div", { class: "candidate", "data-role": "candidate" });
    block.appendChild(h("h3", {}, `substation ${candidate.substation}`));

    const list = h("div", { class: "objects" });
    for (const obj of grid.objects) {
      if (obj.substation !== candidate.substation) continue;
      const assigned = candidate.busbar.get(obj.index);
      const row = h("div", { class: "object-row" });
      row.appendChild(
        h("span", { class: "object-name" }, `${KIND_LABEL[obj.kind]} ${obj.id}`),
      );
      if (assigned === 1 || assigned === 2) {
        const toggle = h(
          "button",
          {
            class: `busbar busbar-${assigned}`,
            "data-object": String(obj.index),
          },
          `busbar ${assigned}`,
        );
        toggle.addEventListener("click", () => store.toggleObject(obj.index));
        row.appendChild(toggle);
        if (session.topology[obj.index] !== assigned) {
          row.appendChild(h("span", { class: "changed" }, "moved"));
        }
      } else {
        row.appendChild(h("span", { class: "busbar-off" }, "out"));
      }
      list.appendChild(row);
    }
    block.appendChild(list);

    const index = store.candidateIndex();
    const valid = index !== null;
    block.appendChild(
      h(
        "p",
        { class: valid ? "validity ok" : "validity bad", "data-role": "validity" },
        valid ? `action #${index}` : "not a valid switching action",
      ),
    );

    const controls = h("div", { class: "row" });
    const simulate = h(
      "button",
      { "data-role": "simulate" },
      "simulate",
    ) as HTMLButtonElement;
    simulate.disabled = !valid || session.status !== "running";
    simulate.addEventListener("click", () => void store.simulateCandidate());
    const apply = h("button", { "data-role": "apply" }, "apply") as HTMLButtonElement;
    apply.disabled = !valid || session.status !== "running";
    apply.addEventListener("click", () => void store.applyCandidate());
    controls.append(simulate, apply);
    block.appendChild(controls);

    if (store.whatIf) {
      block.appendChild(this.whatIfBlock());
    }
    return block;
  }

  private whatIfBlock(): HTMLElement {
    const result = this.store.whatIf!;
    const session = this.store.session!;
    const block = h("div", { class: "whatif", "data-role": "whatif" });
    if (result.game_over) {
      block.appendChild(h("p", { class: "danger" }, "game-over risk"));
    } else {
      const delta = result.rho_max - session.rho_max;
      block.appendChild(
        h(
          "p",
          { "data-role": "whatif-rho" },
          `would be ${(result.rho_max * 100).toFixed(1)}% ` +
            `(${delta >= 0 ? "+" : ""}${(delta * 100).toFixed(1)} pts)`,
        ),
      );
      const moved = result.deltas
        .map((d, i) => ({ line: i, d }))
        .filter((x) => Math.abs(x.d) > 0.005)
        .sort((a, b) => Math.abs(b.d) - Math.abs(a.d))
        .slice(0, 4);
      for (const { line, d } of moved) {
        block.appendChild(
          h(
            "p",
            { class: "delta" },
            `line ${line}: ${d >= 0 ? "+" : ""}${(d * 100).toFixed(1)} pts`,
          ),
        );
      }
    }
    return block;
  }

  private advisorBlock(): HTMLElement {
    const store = this.store;
    const session = store.session!;
    const block = h("div", { class: "advisor", "data-role": "advisor" });
    const advisor = session.advisor;
    if (!advisor) {
      block.appendChild(h("p", { class: "hint" }, "no advisor on this session"));
      return block;
    }
    const what =
      advisor.action_index === 0
        ? "holds (do-nothing)"
        : `suggests action #${advisor.action_index}` +
          (advisor.substation !== null
            ? ` at substation ${advisor.substation}`
            : "");
    block.appendChild(
      h("p", { "data-role": "advisor-text" }, `${advisor.agent} ${what}`),
    );
    if (advisor.action_index !== 0 && session.status === "running") {
      const take = h("button", { "data-role": "advisor-apply" }, "apply suggestion");
      take.addEventListener(
        "click",
        () => void store.actIndex(advisor.action_index),
      );
      block.appendChild(take);
    }
    return block;
  }

  private driveBlock(): HTMLElement {
    const store = this.store;
    const session = store.session!;
    const block = h("div", { class: "drive", "data-role": "drive" });
    const agents = ["donothing", "greedy", "n1"];
    const select = h("select", { "data-role": "agent" }) as HTMLSelectElement;
    for (const a of agents) select.appendChild(h("option", { value: a }, a));
    select.value = "greedy";
    block.appendChild(select);
    const running = session.status === "running";
    for (const [label, steps] of [
      ["step", 1],
      ["hour", 12],
      ["to end", 288],
    ] as const) {
      const btn = h(
        "button",
        { "data-role": `auto-${steps}` },
        label,
      ) as HTMLButtonElement;
      btn.disabled = !running;
      btn.addEventListener("click", () =>
        void store.autoSteps(select.value, steps),
      );
      block.appendChild(btn);
    }
    return block;
  }
}
