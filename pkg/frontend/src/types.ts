// Payload shapes of the supplyatlas HTTP API, mirrored field for field.

export interface FacilityRow {
  id: string;
  activity_code: string;
  address: string | null;
  territory: string | null;
  lat: number | null;
  lon: number | null;
  geocode_quality: string;
}

export interface DirectRow {
  facility_id: string;
  supplier_activity: string;
  intensity: number;
  distance_km: number | null;
}

export interface AlternativeRow {
  facility_id: string;
  activity: string;
  substituted_activity: string;
  proximity_score: number;
  intensity: number;
  distance_km: number | null;
}

export interface Recommendation {
  buyer: string;
  direct: DirectRow[];
  alternative: AlternativeRow[];
}

export interface GraphNode {
  id: string;
  activity: string;
  territory: string | null;
  lat: number | null;
  lon: number | null;
}

export interface GraphEdge {
  source: string;
  target: string;
  kind: "direct" | "alternative";
  weight: number;
  score: number | null;
}

export interface Graph {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface Health {
  status: string;
  facilities: number;
  activities: number;
  graph_loaded: boolean;
}
