"""Supplier recommendations and the territory synergy graph.

For one buyer facility, direct recommendations are nearby facilities
whose activity the buyer's industry actually purchases from; alternative
recommendations substitute those supplier activities with their nearest
neighbours in the activity embedding.  The union over the buyers of a
territory becomes a graph of potential local supply edges.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Optional, Union

from .config import EngineConfig
from .embedding import ActivityVectorSet, nearest_activities
from .errors import UnknownActivityError, UnknownFacilityError
from .facilities import Facility, FacilityRegistry, SpatialIndex
from .ioanalysis import SupplierRelationTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DirectRecommendation:
    """A nearby facility already carrying a wanted supplier activity."""

    facility_id: str
    supplier_activity: str
    intensity: float
    distance_km: Optional[float]


@dataclass(frozen=True)
class AlternativeRecommendation:
    """A nearby facility whose activity sits close to a wanted one."""

    facility_id: str
    activity: str
    substituted_activity: str
    proximity_score: float
    intensity: float
    distance_km: Optional[float]


@dataclass(frozen=True)
class RecommendationSet:
    buyer: str
    direct: tuple[DirectRecommendation, ...]
    alternative: tuple[AlternativeRecommendation, ...]


@dataclass(frozen=True)
class GraphNode:
    id: str
    activity: str
    territory: str
    lat: Optional[float]
    lon: Optional[float]


@dataclass(frozen=True)
class GraphEdge:
    source: str  # buyer facility
    target: str  # recommended supplier facility
    kind: str  # "direct" or "alternative"
    weight: float  # purchase intensity
    score: Optional[float]  # activity proximity, alternatives only


@dataclass(frozen=True)
class SynergyGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]


@dataclass(frozen=True)
class EngineArtifacts:
    """Everything the recommender needs, loaded once."""

    registry: FacilityRegistry
    index: SpatialIndex
    relations: SupplierRelationTable
    vectors: ActivityVectorSet


def _candidate_pool(
    buyer: Facility,
    registry: FacilityRegistry,
    index: SpatialIndex,
    radius_km: float,
    territory: Optional[str],
) -> list[tuple[Facility, Optional[float]]]:
    """Facilities eligible as suppliers for this buyer, with distances.

    Buyers with coordinates search within the radius (further narrowed to
    ``territory`` when one is configured); buyers without fall back to a
    territory listing, where distance is unknown.
    """
    pool: list[tuple[Facility, Optional[float]]] = []
    if buyer.coordinates is not None:
        for fid, distance in index.radius_query(buyer.coordinates, radius_km):
            facility = registry.get(fid)
            if facility is None or fid == buyer.id:
                continue
            if territory is not None and facility.territory != territory:
                continue
            pool.append((facility, distance))
    else:
        code = territory if territory is not None else buyer.territory
        for facility in registry:
            if facility.id == buyer.id or facility.territory != code:
                continue
            pool.append((facility, None))
    return pool


def _supplier_activities(
    buyer: Facility, relations: SupplierRelationTable
) -> tuple[tuple[str, float], ...]:
    wanted = relations.entries.get(buyer.activity_code, ())
    if not wanted:
        logger.info("no supplier relations recorded for activity %s", buyer.activity_code)
    return wanted


def _distance_key(distance: Optional[float]) -> float:
    return math.inf if distance is None else distance


def direct_suppliers(
    buyer: Facility,
    relations: SupplierRelationTable,
    index: SpatialIndex,
    radius_km: float,
    registry: FacilityRegistry,
    territory: Optional[str] = None,
) -> list[DirectRecommendation]:
    """Pool facilities whose activity the buyer's industry buys from.

    Ordered by descending intensity, then distance, then facility id.
    """
    wanted = dict(_supplier_activities(buyer, relations))
    results = []
    for facility, distance in _candidate_pool(buyer, registry, index, radius_km, territory):
        intensity = wanted.get(facility.activity_code)
        if intensity is None:
            continue
        results.append(
            DirectRecommendation(facility.id, facility.activity_code, intensity, distance)
        )
    results.sort(key=lambda r: (-r.intensity, _distance_key(r.distance_km), r.facility_id))
    return results


def alternative_suppliers(
    buyer: Facility,
    relations: SupplierRelationTable,
    vectors: ActivityVectorSet,
    index: SpatialIndex,
    radius_km: float,
    max_score: float,
    k_per_activity: int,
    registry: FacilityRegistry,
    territory: Optional[str] = None,
    exclude: frozenset[str] = frozenset(),
) -> list[AlternativeRecommendation]:
    """Pool facilities carrying activities close to a wanted supplier activity.

    Facilities already recommended directly are excluded; a facility
    reachable through several substitutions keeps its best-scoring route.
    Ordered by ascending score, then descending intensity, distance, id.
    """
    routes: dict[str, list[tuple[float, float, str]]] = {}
    for supplier_activity, intensity in _supplier_activities(buyer, relations):
        try:
            neighbours = nearest_activities(vectors, supplier_activity, k_per_activity, max_score)
        except UnknownActivityError:
            logger.info("activity %s has no embedded vector, skipped", supplier_activity)
            continue
        for neighbour, score in neighbours:
            routes.setdefault(neighbour, []).append((score, -intensity, supplier_activity))

    results = []
    for facility, distance in _candidate_pool(buyer, registry, index, radius_km, territory):
        if facility.id in exclude:
            continue
        options = routes.get(facility.activity_code)
        if not options:
            continue
        score, neg_intensity, substituted = min(options)
        results.append(
            AlternativeRecommendation(
                facility_id=facility.id,
                activity=facility.activity_code,
                substituted_activity=substituted,
                proximity_score=score,
                intensity=-neg_intensity,
                distance_km=distance,
            )
        )
    results.sort(
        key=lambda r: (
            r.proximity_score,
            -r.intensity,
            _distance_key(r.distance_km),
            r.facility_id,
        )
    )
    return results


def recommend(
    buyer_id: str, artifacts: EngineArtifacts, config: EngineConfig
) -> RecommendationSet:
    """Direct and alternative supplier candidates for one facility."""
    buyer = artifacts.registry.get(buyer_id)
    if buyer is None:
        raise UnknownFacilityError(buyer_id)
    direct = direct_suppliers(
        buyer,
        artifacts.relations,
        artifacts.index,
        config.radius_km,
        artifacts.registry,
        config.territory,
    )
    taken = frozenset(r.facility_id for r in direct) | {buyer_id}
    alternative = alternative_suppliers(
        buyer,
        artifacts.relations,
        artifacts.vectors,
        artifacts.index,
        config.radius_km,
        config.max_score,
        config.k_per_activity,
        artifacts.registry,
        config.territory,
        exclude=taken,
    )
    return RecommendationSet(buyer_id, tuple(direct), tuple(alternative))


def build_synergy_graph(artifacts: EngineArtifacts, config: EngineConfig) -> SynergyGraph:
    """Union of recommendations over every buyer in scope.

    Buyers are the registry facilities (restricted to the configured
    territory when set), visited in id order.  Every buyer appears as a
    node even when isolated; suppliers appear once they are recommended.
    """
    buyers = [
        f
        for f in artifacts.registry
        if config.territory is None or f.territory == config.territory
    ]
    node_ids: set[str] = set(f.id for f in buyers)
    edges: list[GraphEdge] = []
    for buyer in buyers:
        recs = recommend(buyer.id, artifacts, config)
        for d in recs.direct:
            edges.append(GraphEdge(buyer.id, d.facility_id, "direct", d.intensity, None))
            node_ids.add(d.facility_id)
        for a in recs.alternative:
            edges.append(
                GraphEdge(buyer.id, a.facility_id, "alternative", a.intensity, a.proximity_score)
            )
            node_ids.add(a.facility_id)

    nodes = []
    for fid in sorted(node_ids):
        facility = artifacts.registry.get(fid)
        lat, lon = facility.coordinates if facility.coordinates is not None else (None, None)
        nodes.append(GraphNode(fid, facility.activity_code, facility.territory, lat, lon))
    edges.sort(key=lambda e: (e.source, e.target, e.kind))
    return SynergyGraph(tuple(nodes), tuple(edges))


# --- serialisation shared by the CLI and the API --------------------------
#
# Floats are rounded to 9 decimals at the boundary so that two routes to
# the same number (or the same route on another platform) serialise to
# identical bytes.  Sorting above always happens on the full-precision
# values.


def _r9(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(value, 9)


def recommendation_payload(recs: RecommendationSet) -> dict:
    return {
        "buyer": recs.buyer,
        "direct": [
            {
                "facility_id": r.facility_id,
                "supplier_activity": r.supplier_activity,
                "intensity": _r9(r.intensity),
                "distance_km": _r9(r.distance_km),
            }
            for r in recs.direct
        ],
        "alternative": [
            {
                "facility_id": r.facility_id,
                "activity": r.activity,
                "substituted_activity": r.substituted_activity,
                "proximity_score": _r9(r.proximity_score),
                "intensity": _r9(r.intensity),
                "distance_km": _r9(r.distance_km),
            }
            for r in recs.alternative
        ],
    }


def serialize_recommendation(recs: RecommendationSet) -> bytes:
    """Canonical JSON bytes: compact separators, sorted keys, one trailing LF."""
    payload = recommendation_payload(recs)
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def graph_payload(graph: SynergyGraph) -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "activity": n.activity,
                "territory": n.territory,
                "lat": _r9(n.lat),
                "lon": _r9(n.lon),
            }
            for n in graph.nodes
        ],
        "edges": [
            {
                "source": e.source,
                "target": e.target,
                "kind": e.kind,
                "weight": _r9(e.weight),
                "score": _r9(e.score),
            }
            for e in graph.edges
        ],
    }


def serialize_graph(graph: SynergyGraph) -> bytes:
    payload = graph_payload(graph)
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def filter_graph(
    graph: SynergyGraph,
    territory: Optional[str] = None,
    kind: Optional[str] = None,
) -> SynergyGraph:
    """Restrict a graph to one buyer territory and/or one edge kind.

    The territory filter keeps edges whose buyer sits in the territory,
    every node of that territory, and any outside supplier still
    referenced by a kept edge.  An unknown territory yields an empty
    graph rather than an error.
    """
    node_by_id = {n.id: n for n in graph.nodes}
    edges = tuple(
        e
        for e in graph.edges
        if (kind is None or e.kind == kind)
        and (territory is None or node_by_id[e.source].territory == territory)
    )
    if territory is None:
        nodes = graph.nodes
    else:
        keep = {n.id for n in graph.nodes if n.territory == territory}
        for e in edges:
            keep.add(e.source)
            keep.add(e.target)
        nodes = tuple(n for n in graph.nodes if n.id in keep)
    return SynergyGraph(nodes, edges)


def graph_from_payload(payload: dict) -> SynergyGraph:
    nodes = tuple(
        GraphNode(n["id"], n["activity"], n["territory"], n["lat"], n["lon"])
        for n in payload["nodes"]
    )
    edges = tuple(
        GraphEdge(e["source"], e["target"], e["kind"], e["weight"], e["score"])
        for e in payload["edges"]
    )
    return SynergyGraph(nodes, edges)


def load_graph(source: Union[str, Path, IO[str]]) -> SynergyGraph:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return load_graph(fh)
    return graph_from_payload(json.load(source))


def graph_to_edge_csv(graph: SynergyGraph, sink: Union[str, Path, IO[str]]) -> None:
    """Flat edge list for spreadsheet use: source,target,kind,weight,score."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            graph_to_edge_csv(graph, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["source", "target", "kind", "weight", "score"])
    for e in graph.edges:
        writer.writerow(
            [
                e.source,
                e.target,
                e.kind,
                f"{e.weight:.9f}",
                "" if e.score is None else f"{e.score:.9f}",
            ]
        )
