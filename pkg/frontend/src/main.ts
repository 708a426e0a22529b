// DOM bootstrap. All logic lives in controller/render; this file only wires
// browser events in and paints render models out.

import { AtlasClient } from "./api.js";
import { AtlasController } from "./controller.js";
import type { AppModel } from "./controller.js";
import {
  frameFor,
  graphShapes,
  project,
  recommendationList,
  recommendationMarkers,
} from "./render.js";
import type { Marker } from "./render.js";
import type { EdgeKind } from "./state.js";
import type { FacilityRow } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const VIEW_W = 1000;
const VIEW_H = 620;

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) return fromQuery.replace(/\/+$/, "");
  const meta = document.querySelector('meta[name="atlas-api"]');
  const content = meta?.getAttribute("content") ?? "";
  return content.replace(/\/+$/, "");
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

function markerRadius(kind: Marker["kind"]): number {
  return kind === "buyer" ? 9 : 6;
}

async function boot(): Promise<void> {
  const client = new AtlasClient(apiBase());
  const banner = el<HTMLDivElement>("banner");
  const searchInput = el<HTMLInputElement>("search");
  const candidatesList = el<HTMLUListElement>("candidates");
  const radiusInput = el<HTMLInputElement>("radius");
  const radiusValue = el<HTMLSpanElement>("radius-value");
  const scoreInput = el<HTMLInputElement>("score");
  const scoreValue = el<HTMLSpanElement>("score-value");
  const directToggle = el<HTMLInputElement>("toggle-direct");
  const altToggle = el<HTMLInputElement>("toggle-alternative");
  const tabMap = el<HTMLButtonElement>("tab-map");
  const tabGraph = el<HTMLButtonElement>("tab-graph");
  const territoryInput = el<HTMLInputElement>("territory");
  const kindSelect = el<HTMLSelectElement>("kind");
  const stage = el<HTMLDivElement>("stage");
  const sideList = el<HTMLOListElement>("side-list");
  const status = el<HTMLDivElement>("status");

  // registry snapshot used to place recommendation markers
  const facilitiesById = new Map<string, FacilityRow>();

  let lastFragment = "";
  const syncUrl = () => {
    const fragment = controller.urlFragment();
    if (fragment === lastFragment) return;
    lastFragment = fragment;
    history.replaceState(null, "", `#${fragment}`);
  };

  const paint = (model: AppModel) => {
    banner.textContent = model.banner ?? "";
    banner.hidden = model.banner === null;

    radiusInput.value = String(model.state.radiusKm);
    radiusValue.textContent = `${model.state.radiusKm} km`;
    scoreInput.value = String(model.state.maxScore);
    scoreValue.textContent = model.state.maxScore.toFixed(2);
    directToggle.checked = model.state.layers.direct;
    altToggle.checked = model.state.layers.alternative;
    territoryInput.value = model.state.territory ?? "";
    kindSelect.value = model.state.kind ?? "all";
    tabMap.classList.toggle("active", model.state.view === "map");
    tabGraph.classList.toggle("active", model.state.view === "graph");

    candidatesList.replaceChildren(
      ...model.candidates.map((c) => {
        const item = document.createElement("li");
        const button = document.createElement("button");
        button.type = "button";
        button.textContent = `${c.id} (${c.activity})${c.address ? " " + c.address : ""}`;
        button.addEventListener("click", () => {
          searchInput.value = "";
          void controller.select(c.id).then(syncUrl);
        });
        item.appendChild(button);
        return item;
      }),
    );

    stage.replaceChildren();
    sideList.replaceChildren();
    status.textContent = model.pending > 0 ? "loading" : "";

    if (model.state.view === "map") {
      if (model.notFound) {
        status.textContent = `facility not found: ${model.notFound}`;
        return;
      }
      if (!model.recommendation) {
        status.textContent = model.pending > 0 ? "loading" : "search for a facility to begin";
        return;
      }
      const markers = recommendationMarkers(model.recommendation, facilitiesById, model.state.layers);
      const frame = frameFor(markers);
      const svg = svgEl("svg", { viewBox: `0 0 ${VIEW_W} ${VIEW_H}`, class: "map" });
      for (const marker of markers) {
        const { x, y } = project(marker.lat, marker.lon, frame, VIEW_W, VIEW_H);
        const dot = svgEl("circle", {
          cx: x.toFixed(1),
          cy: y.toFixed(1),
          r: String(markerRadius(marker.kind)),
          class: `marker ${marker.kind}`,
        });
        const tip = document.createElementNS(SVG_NS, "title");
        tip.textContent = marker.label;
        dot.appendChild(tip);
        svg.appendChild(dot);
      }
      stage.appendChild(svg);

      for (const row of recommendationList(model.recommendation, model.state.layers)) {
        const item = document.createElement("li");
        item.className = row.kind;
        item.textContent = `${row.label} [${row.metric}]`;
        sideList.appendChild(item);
      }
      return;
    }

    // graph view
    if (!model.graph) {
      status.textContent = model.pending > 0 ? "loading" : "";
      return;
    }
    const view = graphShapes(model.graph);
    if (view.empty) {
      status.textContent = "no facilities in this scope";
      return;
    }
    const frame = frameFor(view.markers);
    const svg = svgEl("svg", { viewBox: `0 0 ${VIEW_W} ${VIEW_H}`, class: "map" });
    for (const segment of view.segments) {
      const a = project(segment.from.lat, segment.from.lon, frame, VIEW_W, VIEW_H);
      const b = project(segment.to.lat, segment.to.lon, frame, VIEW_W, VIEW_H);
      svg.appendChild(
        svgEl("line", {
          x1: a.x.toFixed(1),
          y1: a.y.toFixed(1),
          x2: b.x.toFixed(1),
          y2: b.y.toFixed(1),
          class: `edge ${segment.kind}`,
        }),
      );
    }
    for (const marker of view.markers) {
      const { x, y } = project(marker.lat, marker.lon, frame, VIEW_W, VIEW_H);
      const dot = svgEl("circle", { cx: x.toFixed(1), cy: y.toFixed(1), r: "5", class: "marker node" });
      const tip = document.createElementNS(SVG_NS, "title");
      tip.textContent = `${marker.id} (${marker.activity})`;
      dot.appendChild(tip);
      svg.appendChild(dot);
    }
    stage.appendChild(svg);
    if (view.unpositioned.length > 0) {
      const note = document.createElement("li");
      note.textContent = `not on map: ${view.unpositioned.join(", ")}`;
      sideList.appendChild(note);
    }
  };

  const controller = new AtlasController(client, { onRender: paint });

  searchInput.addEventListener("input", () => controller.search(searchInput.value));
  radiusInput.addEventListener("change", () => {
    void controller.setRadius(Number(radiusInput.value)).then(syncUrl);
  });
  scoreInput.addEventListener("change", () => {
    void controller.setMaxScore(Number(scoreInput.value)).then(syncUrl);
  });
  directToggle.addEventListener("change", () => {
    controller.setLayer("direct", directToggle.checked);
    syncUrl();
  });
  altToggle.addEventListener("change", () => {
    controller.setLayer("alternative", altToggle.checked);
    syncUrl();
  });
  tabMap.addEventListener("click", () => {
    void controller.showMap().then(syncUrl);
  });
  const graphScope = (): { territory: string | null; kind: EdgeKind | null } => {
    const kind = kindSelect.value;
    return {
      territory: territoryInput.value.trim() || null,
      kind: kind === "direct" || kind === "alternative" ? kind : null,
    };
  };
  tabGraph.addEventListener("click", () => {
    void controller.openGraph(graphScope()).then(syncUrl);
  });
  territoryInput.addEventListener("change", () => {
    void controller.openGraph(graphScope()).then(syncUrl);
  });
  kindSelect.addEventListener("change", () => {
    void controller.openGraph(graphScope()).then(syncUrl);
  });
  window.addEventListener("hashchange", () => {
    const fragment = window.location.hash.slice(1);
    if (fragment === lastFragment) return;
    lastFragment = fragment;
    void controller.applyUrl(fragment);
  });

  try {
    for (const row of await client.facilities()) facilitiesById.set(row.id, row);
  } catch (err) {
    banner.textContent = err instanceof Error ? err.message : String(err);
    banner.hidden = false;
  }

  const initial = window.location.hash.slice(1);
  lastFragment = initial;
  if (initial) {
    await controller.applyUrl(initial);
  } else {
    paint(controller.model());
  }
}

void boot();
