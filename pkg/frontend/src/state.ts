// View state and its URL fragment codec. Every shareable aspect of the UI
// lives here so a deep link fully reconstructs the screen.

export type ViewKind = "map" | "graph";
export type EdgeKind = "direct" | "alternative";

export interface SliderBounds {
  radiusMin: number;
  radiusMax: number;
  scoreMin: number;
  scoreMax: number;
}

export const DEFAULT_BOUNDS: SliderBounds = {
  radiusMin: 0,
  radiusMax: 500,
  scoreMin: 1,
  scoreMax: 3,
};

export interface LayerToggles {
  direct: boolean;
  alternative: boolean;
}

export interface Viewport {
  centerLat: number;
  centerLon: number;
  zoom: number;
}

export interface ViewState {
  view: ViewKind;
  facilityId: string | null;
  radiusKm: number;
  maxScore: number;
  layers: LayerToggles;
  territory: string | null; // graph scope
  kind: EdgeKind | null; // graph edge filter, null = all
  viewport: Viewport; // ephemeral, not carried in the URL
}

export interface StateDefaults {
  radiusKm?: number;
  maxScore?: number;
}

export function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

export function defaultState(
  defaults: StateDefaults = {},
  bounds: SliderBounds = DEFAULT_BOUNDS,
): ViewState {
  return {
    view: "map",
    facilityId: null,
    radiusKm: clamp(defaults.radiusKm ?? 100, bounds.radiusMin, bounds.radiusMax),
    maxScore: clamp(defaults.maxScore ?? 1.25, bounds.scoreMin, bounds.scoreMax),
    layers: { direct: true, alternative: true },
    territory: null,
    kind: null,
    viewport: { centerLat: 46.5, centerLon: 2.5, zoom: 1 },
  };
}

/**
 * Encode the shareable slice of the state as a URL fragment query string.
 * Key order is fixed so identical states give identical fragments.
 */
export function encodeState(state: ViewState): string {
  const qs = new URLSearchParams();
  qs.set("view", state.view);
  if (state.facilityId) qs.set("f", state.facilityId);
  qs.set("r", String(state.radiusKm));
  qs.set("s", String(state.maxScore));
  qs.set("d", state.layers.direct ? "1" : "0");
  qs.set("a", state.layers.alternative ? "1" : "0");
  if (state.territory) qs.set("t", state.territory);
  if (state.kind) qs.set("k", state.kind);
  return qs.toString();
}

function parseNumber(raw: string | null, fallback: number, lo: number, hi: number): number {
  // Number("") is 0, so blank values must fall back explicitly
  if (raw === null || raw.trim() === "") return fallback;
  const value = Number(raw);
  if (!Number.isFinite(value)) return fallback;
  return clamp(value, lo, hi);
}

/** Rebuild a full ViewState from a fragment; unknown keys and junk values fall back. */
export function decodeState(
  fragment: string,
  defaults: StateDefaults = {},
  bounds: SliderBounds = DEFAULT_BOUNDS,
): ViewState {
  const base = defaultState(defaults, bounds);
  const qs = new URLSearchParams(fragment.replace(/^#/, ""));

  const view = qs.get("view");
  const kind = qs.get("k");
  const facility = qs.get("f");
  const territory = qs.get("t");

  return {
    ...base,
    view: view === "graph" ? "graph" : "map",
    facilityId: facility && facility.trim() ? facility.trim() : null,
    radiusKm: parseNumber(qs.get("r"), base.radiusKm, bounds.radiusMin, bounds.radiusMax),
    maxScore: parseNumber(qs.get("s"), base.maxScore, bounds.scoreMin, bounds.scoreMax),
    layers: {
      direct: qs.get("d") !== "0",
      alternative: qs.get("a") !== "0",
    },
    territory: territory && territory.trim() ? territory.trim() : null,
    kind: kind === "direct" || kind === "alternative" ? kind : null,
  };
}
