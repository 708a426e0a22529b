import { readFileSync } from "node:fs";

import { ApiError } from "../src/api.js";
import type {
  AtlasApi,
  FacilityQuery,
  GraphQuery,
  RecommendationQuery,
} from "../src/api.js";
import type { FacilityRow, Graph, Health, Recommendation } from "../src/types.js";

export function loadFixture<T>(name: string): T {
  const url = new URL(`./fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf8")) as T;
}

export function abortError(): Error {
  return Object.assign(new Error("aborted"), { name: "AbortError" });
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * API fake that replays responses recorded from the real server
 * (tests/fixtures/*.json) and logs every call it sees.
 */
export class RecordedApi implements AtlasApi {
  calls: Array<{ op: string; args: Record<string, unknown> }> = [];

  async facilities(query: FacilityQuery = {}): Promise<FacilityRow[]> {
    this.calls.push({ op: "facilities", args: { ...query } });
    return loadFixture<FacilityRow[]>("facilities.json");
  }

  async recommendations(
    facilityId: string,
    query: RecommendationQuery = {},
  ): Promise<Recommendation> {
    this.calls.push({ op: "recommendations", args: { facilityId, ...query } });
    if (facilityId === "F28") return loadFixture("rec_F28_default.json");
    if (facilityId !== "F01") throw new ApiError(404, `unknown id: ${facilityId}`);
    const byRadius: Record<string, string> = {
      "50": "rec_F01_r50.json",
      "100": "rec_F01_default.json",
      "150": "rec_F01_r150.json",
      "300": "rec_F01_r300.json",
    };
    const name = byRadius[String(query.radiusKm ?? 100)];
    if (!name) throw new Error(`no recorded response for radius ${String(query.radiusKm)}`);
    return loadFixture(name);
  }

  async graph(query: GraphQuery = {}): Promise<Graph> {
    this.calls.push({ op: "graph", args: { ...query } });
    if (query.territory === "00") return loadFixture("graph_empty.json");
    if (query.territory === "63") return loadFixture("graph_t63.json");
    if (query.kind === "direct") return loadFixture("graph_direct.json");
    return loadFixture("graph_all.json");
  }

  async health(): Promise<Health> {
    return loadFixture("health.json");
  }
}

interface PendingRecommendation {
  facilityId: string;
  query: RecommendationQuery;
  signal: AbortSignal | undefined;
  aborted: boolean;
  resolve: (rec: Recommendation) => void;
}

/** API fake whose recommendation responses resolve only when the test says so. */
export class ManualApi implements AtlasApi {
  recCalls: PendingRecommendation[] = [];

  recommendations(
    facilityId: string,
    query: RecommendationQuery = {},
    signal?: AbortSignal,
  ): Promise<Recommendation> {
    return new Promise<Recommendation>((resolve, reject) => {
      const entry: PendingRecommendation = {
        facilityId,
        query,
        signal,
        aborted: false,
        resolve,
      };
      signal?.addEventListener("abort", () => {
        entry.aborted = true;
        reject(abortError());
      });
      this.recCalls.push(entry);
    });
  }

  async facilities(): Promise<FacilityRow[]> {
    return [];
  }

  async graph(): Promise<Graph> {
    return { nodes: [], edges: [] };
  }

  async health(): Promise<Health> {
    return loadFixture("health.json");
  }
}
