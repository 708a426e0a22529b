// Pure render models. Everything here maps API payloads plus view state to
// plain data the DOM layer draws; API list order is preserved throughout.

import type { FacilityRow, Graph, GraphEdge, Recommendation } from "./types.js";
import type { LayerToggles } from "./state.js";

export type MarkerKind = "buyer" | "direct" | "alternative";

export interface Marker {
  id: string;
  kind: MarkerKind;
  lat: number;
  lon: number;
  label: string;
}

export interface ListRow {
  facilityId: string;
  kind: "direct" | "alternative";
  label: string;
  metric: string;
}

export interface Candidate {
  id: string;
  activity: string;
  address: string | null;
}

export function searchCandidates(
  rows: FacilityRow[],
  query: string,
  cap = 10,
): Candidate[] {
  const q = query.trim().toLowerCase();
  if (!q) return [];
  const hits = rows.filter(
    (row) =>
      row.id.toLowerCase().startsWith(q) ||
      (row.address ?? "").toLowerCase().includes(q),
  );
  return hits.slice(0, cap).map((row) => ({
    id: row.id,
    activity: row.activity_code,
    address: row.address,
  }));
}

function km(distance: number | null): string {
  return distance === null ? "distance n/a" : `${distance.toFixed(1)} km`;
}

/**
 * Side list rows in the exact order the API returned them: the direct block
 * first, then alternatives. Toggles drop whole blocks, never reorder.
 */
export function recommendationList(rec: Recommendation, layers: LayerToggles): ListRow[] {
  const rows: ListRow[] = [];
  if (layers.direct) {
    for (const r of rec.direct) {
      rows.push({
        facilityId: r.facility_id,
        kind: "direct",
        label: `${r.facility_id} ${r.supplier_activity}`,
        metric: `intensity ${r.intensity.toFixed(3)}, ${km(r.distance_km)}`,
      });
    }
  }
  if (layers.alternative) {
    for (const r of rec.alternative) {
      rows.push({
        facilityId: r.facility_id,
        kind: "alternative",
        label: `${r.facility_id} ${r.activity}`,
        metric: `score ${r.proximity_score.toFixed(3)} for ${r.substituted_activity}, ${km(r.distance_km)}`,
      });
    }
  }
  return rows;
}

/**
 * Map markers for one recommendation: the buyer first, then suppliers in API
 * order. Facilities without coordinates stay in the list but get no marker.
 */
export function recommendationMarkers(
  rec: Recommendation,
  facilitiesById: Map<string, FacilityRow>,
  layers: LayerToggles,
): Marker[] {
  const markers: Marker[] = [];
  const push = (id: string, kind: MarkerKind, label: string) => {
    const row = facilitiesById.get(id);
    if (!row || row.lat === null || row.lon === null) return;
    markers.push({ id, kind, lat: row.lat, lon: row.lon, label });
  };
  push(rec.buyer, "buyer", rec.buyer);
  if (layers.direct) {
    for (const r of rec.direct) push(r.facility_id, "direct", `${r.facility_id} ${r.supplier_activity}`);
  }
  if (layers.alternative) {
    for (const r of rec.alternative) push(r.facility_id, "alternative", `${r.facility_id} ${r.activity}`);
  }
  return markers;
}

export interface GeoFrame {
  minLat: number;
  maxLat: number;
  minLon: number;
  maxLon: number;
}

/** Bounding box of the given points, padded so markers stay off the border. */
export function frameFor(points: Array<{ lat: number; lon: number }>, padFraction = 0.08): GeoFrame {
  if (points.length === 0) {
    return { minLat: -60, maxLat: 70, minLon: -180, maxLon: 180 };
  }
  let minLat = Infinity;
  let maxLat = -Infinity;
  let minLon = Infinity;
  let maxLon = -Infinity;
  for (const p of points) {
    minLat = Math.min(minLat, p.lat);
    maxLat = Math.max(maxLat, p.lat);
    minLon = Math.min(minLon, p.lon);
    maxLon = Math.max(maxLon, p.lon);
  }
  // degenerate frames (single point, collinear) get a half-degree margin
  const latPad = Math.max((maxLat - minLat) * padFraction, 0.5);
  const lonPad = Math.max((maxLon - minLon) * padFraction, 0.5);
  return {
    minLat: minLat - latPad,
    maxLat: maxLat + latPad,
    minLon: minLon - lonPad,
    maxLon: maxLon + lonPad,
  };
}

/** Equirectangular projection of a point into a width x height box (y grows down). */
export function project(
  lat: number,
  lon: number,
  frame: GeoFrame,
  width: number,
  height: number,
): { x: number; y: number } {
  const x = ((lon - frame.minLon) / (frame.maxLon - frame.minLon)) * width;
  const y = ((frame.maxLat - lat) / (frame.maxLat - frame.minLat)) * height;
  return { x, y };
}

export interface GraphMarker {
  id: string;
  activity: string;
  territory: string | null;
  lat: number;
  lon: number;
}

export interface GraphSegment {
  source: string;
  target: string;
  kind: "direct" | "alternative";
  from: { lat: number; lon: number };
  to: { lat: number; lon: number };
}

export interface GraphView {
  markers: GraphMarker[];
  segments: GraphSegment[];
  unpositioned: string[]; // node ids with no coordinates
  empty: boolean;
}

export function edgeKey(edge: GraphEdge): string {
  return `${edge.source}>${edge.target}:${edge.kind}`;
}

/** Geographic layout of the synergy graph; edges render only when both ends have coordinates. */
export function graphShapes(graph: Graph): GraphView {
  const position = new Map<string, { lat: number; lon: number }>();
  const markers: GraphMarker[] = [];
  const unpositioned: string[] = [];
  for (const node of graph.nodes) {
    if (node.lat === null || node.lon === null) {
      unpositioned.push(node.id);
      continue;
    }
    position.set(node.id, { lat: node.lat, lon: node.lon });
    markers.push({
      id: node.id,
      activity: node.activity,
      territory: node.territory,
      lat: node.lat,
      lon: node.lon,
    });
  }
  const segments: GraphSegment[] = [];
  for (const edge of graph.edges) {
    const from = position.get(edge.source);
    const to = position.get(edge.target);
    if (!from || !to) continue;
    segments.push({ source: edge.source, target: edge.target, kind: edge.kind, from, to });
  }
  return {
    markers,
    segments,
    unpositioned,
    empty: graph.nodes.length === 0,
  };
}
