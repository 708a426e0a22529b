"""Read-only HTTP facade over the built artifacts.

The API never computes artifacts; it serves what the pipeline built.
Recommendation and graph payloads go through the exact serialiser the
CLI uses, so the two surfaces answer with identical bytes.
"""

from __future__ import annotations

import logging
from typing import Literal, Optional

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .config import EngineConfig, with_overrides
from .errors import (
    SupplyAtlasError,
    UnknownActivityError,
    UnknownFacilityError,
)
from .pipeline import ArtifactStore
from .recommender import (
    EngineArtifacts,
    SynergyGraph,
    filter_graph,
    load_graph,
    recommend,
    serialize_graph,
    serialize_recommendation,
)
from .embedding import nearest_activities

logger = logging.getLogger(__name__)

MAX_PAGE = 1000


def _facility_payload(facility) -> dict:
    lat, lon = facility.coordinates if facility.coordinates is not None else (None, None)
    return {
        "id": facility.id,
        "activity_code": facility.activity_code,
        "address": facility.address,
        "territory": facility.territory,
        "lat": lat,
        "lon": lon,
        "geocode_quality": facility.geocode_quality.value,
    }


def create_app(
    artifacts: EngineArtifacts,
    config: EngineConfig,
    store: Optional[ArtifactStore] = None,
    graph: Optional[SynergyGraph] = None,
) -> FastAPI:
    """Wire the routes around one immutable set of artifacts.

    The synergy graph comes from ``graph`` or, failing that, from the
    store's verified artifact; without either the graph endpoint answers
    404.
    """
    if graph is None and store is not None and store.has("synergy_graph.json"):
        graph = load_graph(store.verify("synergy_graph.json"))

    app = FastAPI(title="supplyatlas", docs_url="/docs", redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # bad query parameters are the caller's problem, not a 422 entity issue
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(SupplyAtlasError)
    async def engine_handler(request: Request, exc: SupplyAtlasError):
        if isinstance(exc, (UnknownFacilityError, UnknownActivityError)):
            missing = exc.args[0] if exc.args else "?"
            return JSONResponse(status_code=404, content={"detail": f"unknown id: {missing}"})
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "facilities": len(artifacts.registry),
            "activities": len(artifacts.vectors.vectors),
            "graph_loaded": graph is not None,
        }

    @app.get("/facilities")
    def list_facilities(
        response: Response,
        activity: Optional[str] = None,
        territory: Optional[str] = None,
        limit: int = Query(default=100, ge=1, le=MAX_PAGE),
        offset: int = Query(default=0, ge=0),
    ):
        rows = [
            f
            for f in artifacts.registry
            if (activity is None or f.activity_code == activity.strip().upper())
            and (territory is None or f.territory == territory)
        ]
        response.headers["X-Total-Count"] = str(len(rows))
        return [_facility_payload(f) for f in rows[offset : offset + limit]]

    @app.get("/facilities/{facility_id}")
    def get_facility(facility_id: str):
        facility = artifacts.registry.get(facility_id)
        if facility is None:
            raise UnknownFacilityError(facility_id)
        return _facility_payload(facility)

    @app.get("/facilities/{facility_id}/recommendations")
    def get_recommendations(
        facility_id: str,
        radius_km: Optional[float] = Query(default=None, ge=0),
        max_score: Optional[float] = Query(default=None, ge=1),
    ):
        effective = with_overrides(config, radius_km=radius_km, max_score=max_score)
        result = recommend(facility_id, artifacts, effective)
        return Response(
            content=serialize_recommendation(result), media_type="application/json"
        )

    @app.get("/activities")
    def list_activities(response: Response):
        codes = sorted(artifacts.vectors.vectors)
        response.headers["X-Total-Count"] = str(len(codes))
        return [
            {
                "code": code,
                "suppliers": len(artifacts.relations.entries.get(code, ())),
            }
            for code in codes
        ]

    @app.get("/activities/{code}/neighbors")
    def get_neighbors(
        code: str,
        k: Optional[int] = Query(default=None, ge=0),
        max_score: Optional[float] = Query(default=None, ge=1),
    ):
        k = config.k_per_activity if k is None else k
        max_score = config.max_score if max_score is None else max_score
        neighbours = nearest_activities(artifacts.vectors, code.strip().upper(), k, max_score)
        return {
            "activity": code.strip().upper(),
            "neighbors": [
                {"activity": a, "score": round(s, 9)} for a, s in neighbours
            ],
        }

    @app.get("/graph")
    def get_graph(
        territory: Optional[str] = None,
        kind: Optional[Literal["direct", "alternative"]] = None,
    ):
        if graph is None:
            return JSONResponse(
                status_code=404, content={"detail": "graph artifact has not been built"}
            )
        filtered = filter_graph(graph, territory=territory, kind=kind)
        return Response(content=serialize_graph(filtered), media_type="application/json")

    return app
