import type { FacilityRow, Graph, Health, Recommendation } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export function isAbortError(err: unknown): boolean {
  return err instanceof Error && err.name === "AbortError";
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

type Params = Record<string, string | number | null | undefined>;

export interface FacilityQuery {
  activity?: string;
  territory?: string;
  limit?: number;
  offset?: number;
}

export interface RecommendationQuery {
  radiusKm?: number;
  maxScore?: number;
}

export interface GraphQuery {
  territory?: string;
  kind?: "direct" | "alternative";
}

/** The slice of the HTTP API the UI consumes. Fakes in tests implement this. */
export interface AtlasApi {
  facilities(query?: FacilityQuery, signal?: AbortSignal): Promise<FacilityRow[]>;
  recommendations(
    facilityId: string,
    query?: RecommendationQuery,
    signal?: AbortSignal,
  ): Promise<Recommendation>;
  graph(query?: GraphQuery, signal?: AbortSignal): Promise<Graph>;
  health(signal?: AbortSignal): Promise<Health>;
}

export class AtlasClient implements AtlasApi {
  private readonly fetchFn: FetchLike;

  // baseUrl comes from deployment config; "" means same origin
  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  url(path: string, params?: Params): string {
    const qs = new URLSearchParams();
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value === undefined || value === null) continue;
      qs.set(key, String(value));
    }
    const suffix = qs.toString();
    return this.baseUrl + path + (suffix ? `?${suffix}` : "");
  }

  private async get<T>(path: string, params?: Params, signal?: AbortSignal): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.url(path, params), { signal });
    } catch (err) {
      if (isAbortError(err)) throw err;
      throw new ApiError(0, `API unreachable: ${err instanceof Error ? err.message : String(err)}`);
    }
    if (!res.ok) {
      let detail = `HTTP ${res.status}`;
      try {
        const body: unknown = await res.json();
        if (body && typeof body === "object" && "detail" in body) {
          const d = (body as { detail: unknown }).detail;
          if (typeof d === "string") detail = d;
        }
      } catch {
        // non-JSON error body, keep the status line
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  facilities(query: FacilityQuery = {}, signal?: AbortSignal): Promise<FacilityRow[]> {
    return this.get(
      "/facilities",
      {
        activity: query.activity,
        territory: query.territory,
        limit: query.limit ?? 1000,
        offset: query.offset,
      },
      signal,
    );
  }

  recommendations(
    facilityId: string,
    query: RecommendationQuery = {},
    signal?: AbortSignal,
  ): Promise<Recommendation> {
    return this.get(
      `/facilities/${encodeURIComponent(facilityId)}/recommendations`,
      { radius_km: query.radiusKm, max_score: query.maxScore },
      signal,
    );
  }

  graph(query: GraphQuery = {}, signal?: AbortSignal): Promise<Graph> {
    return this.get("/graph", { territory: query.territory, kind: query.kind }, signal);
  }

  health(signal?: AbortSignal): Promise<Health> {
    return this.get("/health", undefined, signal);
  }
}
