// Entry point: wires the store to the three views and the session form.

import { ApiClient } from "./api.js";
import { GridView } from "./grid_view.js";
import { Panel } from "./panel.js";
import { SessionStore } from "./store.js";
import { Timeline } from "./timeline.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot() {
  const store = new SessionStore(new ApiClient(""));
  await store.loadStatics();

  const scenarioSelect = byId<HTMLSelectElement>("scenario");
  const daySelect = byId<HTMLSelectElement>("day");
  const regimeInput = byId<HTMLInputElement>("regime");
  const advisorSelect = byId<HTMLSelectElement>("advisor");
  const openButton = byId<HTMLButtonElement>("open");
  const exportButton = byId<HTMLButtonElement>("export");

  for (const sc of store.manifest?.scenarios ?? []) {
    const opt = document.createElement("option");
    opt.value = String(sc.id);
    opt.textContent = `scenario ${sc.id}`;
    scenarioSelect.appendChild(opt);
  }
  const syncDays = () => {
    daySelect.replaceChildren();
    const sc = store.manifest?.scenarios.find(
      (s) => s.id === Number(scenarioSelect.value),
    );
    for (let d = 0; d < (sc?.days ?? 0); d++) {
      const opt = document.createElement("option");
      opt.value = String(d);
      opt.textContent = `day ${d}`;
      daySelect.appendChild(opt);
    }
  };
  scenarioSelect.addEventListener("change", syncDays);
  syncDays();

  let gridView: GridView | null = null;
  let selected: number | null = null;
  const timeline = new Timeline();
  const panel = new Panel(store);
  byId("timeline-slot").appendChild(timeline.root);
  byId("panel-slot").appendChild(panel.root);

  const render = () => {
    if (!store.session || !store.grid) return;
    if (!gridView) {
      gridView = new GridView(store.grid, {
        onSelect: (id) => {
          selected = selected === id ? null : id;
          store.selectSubstation(selected);
        },
      });
      byId("grid-slot").appendChild(gridView.root);
    }
    gridView.render(store.session, selected);
    timeline.render(store.session, store.rhoHistory);
    panel.render();
  };
  store.subscribe(render);

  openButton.addEventListener("click", () => {
    selected = null;
    void store
      .open(
        Number(scenarioSelect.value),
        Number(daySelect.value),
        regimeInput.value || "full",
        advisorSelect.value || undefined,
      )
      .catch((err) => {
        byId("form-error").textContent = String(err.message ?? err);
      });
    byId("form-error").textContent = "";
  });

  exportButton.addEventListener("click", () => {
    if (!store.session) return;
    void store.api.export(store.session.id).then((doc) => {
      const blob = new Blob([JSON.stringify(doc, null, 1)], {
        type: "application/json",
      });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = `session-${store.session!.id}.json`;
      a.click();
      URL.revokeObjectURL(a.href);
    });
  });
}

void boot().catch((err) => {
  document.body.insertAdjacentText(
    "afterbegin",
    `console failed to start: ${err.message ?? err}`,
  );
});
