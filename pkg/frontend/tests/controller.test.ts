import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import type { AtlasApi } from "../src/api.js";
import { AtlasController } from "../src/controller.js";
import type { AppModel } from "../src/controller.js";
import { recommendationList } from "../src/render.js";
import type { Graph, Recommendation } from "../src/types.js";
import { ManualApi, RecordedApi, loadFixture, sleep } from "./helpers.js";

function capture(): { models: AppModel[]; onRender: (m: AppModel) => void } {
  const models: AppModel[] = [];
  return { models, onRender: (m) => models.push(m) };
}

describe("selecting a facility", () => {
  it("loads recommendations and mirrors the recorded ordering", async () => {
    const api = new RecordedApi();
    const { models, onRender } = capture();
    const controller = new AtlasController(api, { onRender });

    await controller.select("F01");

    const model = controller.model();
    const fixture = loadFixture<Recommendation>("rec_F01_default.json");
    expect(model.recommendation).toEqual(fixture);
    expect(model.state.facilityId).toBe("F01");
    expect(model.banner).toBeNull();
    expect(models.length).toBeGreaterThan(0);

    const rows = recommendationList(model.recommendation!, model.state.layers);
    expect(rows.map((r) => r.facilityId)).toEqual([
      ...fixture.direct.map((r) => r.facility_id),
      ...fixture.alternative.map((r) => r.facility_id),
    ]);
  });

  it("flags unknown facilities instead of crashing", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.select("NOPE");

    const model = controller.model();
    expect(model.notFound).toBe("NOPE");
    expect(model.recommendation).toBeNull();
    expect(model.banner).toBeNull();
  });

  it("puts server failures in the banner", async () => {
    const failing: AtlasApi = {
      facilities: async () => [],
      recommendations: async () => {
        throw new ApiError(500, "HTTP 500");
      },
      graph: async () => ({ nodes: [], edges: [] }),
      health: async () => loadFixture("health.json"),
    };
    const controller = new AtlasController(failing);

    await controller.select("F01");

    const model = controller.model();
    expect(model.banner).toBe("HTTP 500");
    expect(model.notFound).toBeNull();
  });
});

describe("slider moves", () => {
  it("re-query the API with the new value", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);
    await controller.select("F01");
    await controller.setRadius(150);

    const recCalls = api.calls.filter((c) => c.op === "recommendations");
    expect(recCalls.length).toBe(2);
    expect(recCalls[1]!.args["radiusKm"]).toBe(150);
    expect(controller.model().recommendation).toEqual(
      loadFixture<Recommendation>("rec_F01_r150.json"),
    );
  });

  it("abort the in-flight request when superseded", async () => {
    const api = new ManualApi();
    const controller = new AtlasController(api);

    const first = controller.select("F01");
    api.recCalls[0]!.resolve(loadFixture("rec_F01_default.json"));
    await first;

    const slow = controller.setRadius(150);
    const fast = controller.setRadius(300);
    expect(api.recCalls.length).toBe(3);
    expect(api.recCalls[1]!.aborted).toBe(true);

    api.recCalls[2]!.resolve(loadFixture("rec_F01_r300.json"));
    await Promise.all([slow, fast]);

    const model = controller.model();
    expect(model.recommendation).toEqual(loadFixture<Recommendation>("rec_F01_r300.json"));
    expect(model.banner).toBeNull();
    expect(model.pending).toBe(0);
  });

  it("drop stale responses that resolve after a newer one", async () => {
    const api = new ManualApi();
    const controller = new AtlasController(api);

    const first = controller.select("F01");
    api.recCalls[0]!.resolve(loadFixture("rec_F01_default.json"));
    await first;

    const stale = controller.setRadius(150);
    const fresh = controller.setRadius(300);
    // resolve out of order: newest first, then the superseded one limps in
    api.recCalls[2]!.resolve(loadFixture("rec_F01_r300.json"));
    await fresh;
    api.recCalls[1]!.resolve(loadFixture("rec_F01_r150.json"));
    await stale;

    expect(controller.model().recommendation).toEqual(
      loadFixture<Recommendation>("rec_F01_r300.json"),
    );
  });

  it("clamp to the configured bounds before querying", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api, {
      bounds: { radiusMin: 0, radiusMax: 300, scoreMin: 1, scoreMax: 3 },
    });
    await controller.select("F01");
    await controller.setRadius(99999);

    expect(controller.model().state.radiusKm).toBe(300);
    const recCalls = api.calls.filter((c) => c.op === "recommendations");
    expect(recCalls[recCalls.length - 1]!.args["radiusKm"]).toBe(300);
  });

  it("do nothing when the value is unchanged", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);
    await controller.select("F01");
    const before = api.calls.length;
    await controller.setRadius(100);
    expect(api.calls.length).toBe(before);
  });
});

describe("layer toggles", () => {
  it("re-render without touching the API", async () => {
    const api = new RecordedApi();
    const { models, onRender } = capture();
    const controller = new AtlasController(api, { onRender });
    await controller.select("F01");

    const before = api.calls.length;
    controller.setLayer("alternative", false);
    controller.setLayer("direct", false);

    expect(api.calls.length).toBe(before);
    const last = models[models.length - 1]!;
    expect(last.state.layers).toEqual({ direct: false, alternative: false });
    // the data itself stays put; only what is drawn changes
    expect(last.recommendation).not.toBeNull();
  });
});

describe("search", () => {
  it("debounces bursts of keystrokes into one request", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api, { debounceMs: 10 });

    controller.search("F");
    controller.search("F0");
    controller.search("F01");
    await sleep(40);

    expect(api.calls.filter((c) => c.op === "facilities").length).toBe(1);
    const ids = controller.model().candidates.map((c) => c.id);
    expect(ids).toContain("F01");
    expect(ids.every((id) => id.startsWith("F01"))).toBe(true);
  });

  it("clears instantly on an empty query without calling the API", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api, { debounceMs: 10 });

    controller.search("F01");
    await sleep(40);
    expect(controller.model().candidates.length).toBe(1);

    controller.search("");
    expect(controller.model().candidates).toEqual([]);
    await sleep(40);
    expect(api.calls.filter((c) => c.op === "facilities").length).toBe(1);
  });

  it("shows a banner when the listing call fails", async () => {
    const failing: AtlasApi = {
      facilities: async () => {
        throw new ApiError(500, "HTTP 500");
      },
      recommendations: async () => loadFixture("rec_F01_default.json"),
      graph: async () => ({ nodes: [], edges: [] }),
      health: async () => loadFixture("health.json"),
    };
    const controller = new AtlasController(failing, { debounceMs: 1 });

    controller.search("F0");
    await sleep(30);

    const model = controller.model();
    expect(model.banner).toBe("HTTP 500");
    expect(model.candidates).toEqual([]);
  });
});

describe("graph view", () => {
  it("fetches the scoped graph", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.openGraph({ territory: "63" });

    const model = controller.model();
    expect(model.state.view).toBe("graph");
    expect(model.graph).toEqual(loadFixture<Graph>("graph_t63.json"));
    const call = api.calls.find((c) => c.op === "graph");
    expect(call!.args["territory"]).toBe("63");
  });

  it("passes the kind filter through", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.openGraph({ kind: "direct" });

    const graph = controller.model().graph!;
    expect(graph.edges.every((e) => e.kind === "direct")).toBe(true);
  });

  it("hands an empty scope to the empty state, not the banner", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.openGraph({ territory: "00" });

    const model = controller.model();
    expect(model.graph).toEqual({ nodes: [], edges: [] });
    expect(model.banner).toBeNull();
  });
});

describe("deep links", () => {
  it("rebuilds state and data from a URL fragment", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.applyUrl("view=map&f=F01&r=150&s=1.25&d=1&a=0");

    const model = controller.model();
    expect(model.state.facilityId).toBe("F01");
    expect(model.state.radiusKm).toBe(150);
    expect(model.state.layers).toEqual({ direct: true, alternative: false });
    expect(model.recommendation).toEqual(loadFixture<Recommendation>("rec_F01_r150.json"));
  });

  it("round-trips through urlFragment", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    const fragment = "view=map&f=F01&r=150&s=1.25&d=1&a=0";
    await controller.applyUrl(fragment);
    expect(controller.urlFragment()).toBe(fragment);
  });

  it("opens the graph view with its scope from the URL", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.applyUrl("view=graph&r=100&s=1.25&d=1&a=1&t=63&k=direct");

    const model = controller.model();
    expect(model.state.view).toBe("graph");
    expect(model.state.territory).toBe("63");
    expect(model.state.kind).toBe("direct");
    const call = api.calls.find((c) => c.op === "graph");
    expect(call!.args).toEqual({ territory: "63", kind: "direct" });
  });

  it("a bare fragment lands on the default screen", async () => {
    const api = new RecordedApi();
    const controller = new AtlasController(api);

    await controller.applyUrl("");

    const model = controller.model();
    expect(model.state).toEqual(controller.model().state);
    expect(model.recommendation).toBeNull();
    expect(api.calls).toEqual([]);
  });
});
