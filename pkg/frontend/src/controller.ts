// Single-session event loop: every user gesture lands here, mutates the view
// state, talks to the API, and re-renders. A gesture that supersedes an
// in-flight request aborts it; late responses are dropped by sequence number.

import { ApiError, isAbortError } from "./api.js";
import type { AtlasApi } from "./api.js";
import type { Candidate } from "./render.js";
import { searchCandidates } from "./render.js";
import type { EdgeKind, LayerToggles, SliderBounds, StateDefaults, ViewState } from "./state.js";
import { DEFAULT_BOUNDS, clamp, decodeState, defaultState, encodeState } from "./state.js";
import type { Graph, Recommendation } from "./types.js";

export interface AppModel {
  state: ViewState;
  candidates: Candidate[];
  recommendation: Recommendation | null;
  graph: Graph | null;
  notFound: string | null; // facility id the API did not know
  banner: string | null; // transport or server failure message
  pending: number;
}

export interface ControllerOptions {
  bounds?: SliderBounds;
  defaults?: StateDefaults;
  debounceMs?: number;
  onRender?: (model: AppModel) => void;
}

export class AtlasController {
  private state: ViewState;
  private candidates: Candidate[] = [];
  private recommendation: Recommendation | null = null;
  private graph: Graph | null = null;
  private notFound: string | null = null;
  private banner: string | null = null;
  private pending = 0;

  private searchTimer: ReturnType<typeof setTimeout> | null = null;
  private searchAbort: AbortController | null = null;
  private recAbort: AbortController | null = null;
  private graphAbort: AbortController | null = null;
  private recSeq = 0;
  private graphSeq = 0;

  constructor(
    private readonly client: AtlasApi,
    private readonly options: ControllerOptions = {},
  ) {
    this.state = defaultState(options.defaults, this.bounds);
  }

  private get bounds(): SliderBounds {
    return this.options.bounds ?? DEFAULT_BOUNDS;
  }

  model(): AppModel {
    return {
      state: {
        ...this.state,
        layers: { ...this.state.layers },
        viewport: { ...this.state.viewport },
      },
      candidates: this.candidates,
      recommendation: this.recommendation,
      graph: this.graph,
      notFound: this.notFound,
      banner: this.banner,
      pending: this.pending,
    };
  }

  private render(): void {
    this.options.onRender?.(this.model());
  }

  urlFragment(): string {
    return encodeState(this.state);
  }

  /** Debounced facility search over GET /facilities; empty input clears instantly. */
  search(query: string): void {
    if (this.searchTimer !== null) clearTimeout(this.searchTimer);
    this.searchTimer = null;
    const q = query.trim();
    if (!q) {
      this.searchAbort?.abort();
      this.candidates = [];
      this.render();
      return;
    }
    this.searchTimer = setTimeout(() => {
      this.searchTimer = null;
      void this.runSearch(q);
    }, this.options.debounceMs ?? 200);
  }

  private async runSearch(query: string): Promise<void> {
    this.searchAbort?.abort();
    const abort = new AbortController();
    this.searchAbort = abort;
    this.pending += 1;
    this.render();
    try {
      const rows = await this.client.facilities({}, abort.signal);
      if (abort.signal.aborted) return;
      this.candidates = searchCandidates(rows, query);
      this.banner = null;
    } catch (err) {
      if (isAbortError(err)) return;
      this.candidates = [];
      this.banner = err instanceof Error ? err.message : String(err);
    } finally {
      this.pending -= 1;
      this.render();
    }
  }

  async select(facilityId: string): Promise<void> {
    this.state = { ...this.state, view: "map", facilityId };
    this.candidates = [];
    await this.refreshRecommendations();
  }

  async setRadius(value: number): Promise<void> {
    const v = clamp(value, this.bounds.radiusMin, this.bounds.radiusMax);
    if (v === this.state.radiusKm) {
      this.render();
      return;
    }
    this.state = { ...this.state, radiusKm: v };
    await this.refreshRecommendations();
  }

  async setMaxScore(value: number): Promise<void> {
    const v = clamp(value, this.bounds.scoreMin, this.bounds.scoreMax);
    if (v === this.state.maxScore) {
      this.render();
      return;
    }
    this.state = { ...this.state, maxScore: v };
    await this.refreshRecommendations();
  }

  /** Layer toggles only change what is drawn; no request is made. */
  setLayer(layer: keyof LayerToggles, on: boolean): void {
    this.state = {
      ...this.state,
      layers: { ...this.state.layers, [layer]: on },
    };
    this.render();
  }

  private async refreshRecommendations(): Promise<void> {
    const id = this.state.facilityId;
    if (!id) {
      this.recommendation = null;
      this.render();
      return;
    }
    this.recAbort?.abort();
    const abort = new AbortController();
    this.recAbort = abort;
    const seq = ++this.recSeq;
    this.pending += 1;
    this.render();
    try {
      const rec = await this.client.recommendations(
        id,
        { radiusKm: this.state.radiusKm, maxScore: this.state.maxScore },
        abort.signal,
      );
      if (seq !== this.recSeq) return;
      this.recommendation = rec;
      this.notFound = null;
      this.banner = null;
    } catch (err) {
      if (isAbortError(err) || seq !== this.recSeq) return;
      if (err instanceof ApiError && err.status === 404) {
        this.notFound = id;
        this.recommendation = null;
        this.banner = null;
      } else {
        this.banner = err instanceof Error ? err.message : String(err);
      }
    } finally {
      this.pending -= 1;
      this.render();
    }
  }

  async showMap(): Promise<void> {
    this.state = { ...this.state, view: "map" };
    this.render();
  }

  async openGraph(scope: { territory?: string | null; kind?: EdgeKind | null } = {}): Promise<void> {
    this.state = {
      ...this.state,
      view: "graph",
      territory: scope.territory !== undefined ? scope.territory : this.state.territory,
      kind: scope.kind !== undefined ? scope.kind : this.state.kind,
    };
    await this.refreshGraph();
  }

  private async refreshGraph(): Promise<void> {
    this.graphAbort?.abort();
    const abort = new AbortController();
    this.graphAbort = abort;
    const seq = ++this.graphSeq;
    this.pending += 1;
    this.render();
    try {
      const graph = await this.client.graph(
        {
          territory: this.state.territory ?? undefined,
          kind: this.state.kind ?? undefined,
        },
        abort.signal,
      );
      if (seq !== this.graphSeq) return;
      this.graph = graph;
      this.banner = null;
    } catch (err) {
      if (isAbortError(err) || seq !== this.graphSeq) return;
      this.graph = null;
      this.banner = err instanceof Error ? err.message : String(err);
    } finally {
      this.pending -= 1;
      this.render();
    }
  }

  /** Deep-link entry: rebuild the whole state from a URL fragment and fetch what it shows. */
  async applyUrl(fragment: string): Promise<void> {
    this.state = decodeState(fragment, this.options.defaults, this.bounds);
    const jobs: Array<Promise<void>> = [];
    if (this.state.facilityId) jobs.push(this.refreshRecommendations());
    if (this.state.view === "graph") jobs.push(this.refreshGraph());
    if (jobs.length === 0) this.render();
    await Promise.all(jobs);
  }
}
