import io
import json

import numpy as np
import pytest

from supplyatlas.config import EngineConfig
from supplyatlas.embedding import ActivityVectorSet
from supplyatlas.errors import UnknownFacilityError
from supplyatlas.facilities import Facility, FacilityRegistry, GeocodeQuality, SpatialIndex
from supplyatlas.ioanalysis import SupplierRelationTable
from supplyatlas.recommender import (
    AlternativeRecommendation,
    DirectRecommendation,
    EngineArtifacts,
    GraphEdge,
    GraphNode,
    RecommendationSet,
    SynergyGraph,
    build_synergy_graph,
    filter_graph,
    graph_from_payload,
    graph_to_edge_csv,
    recommend,
    serialize_graph,
    serialize_recommendation,
)

DATA_DIR = __file__.rsplit("/", 1)[0] + "/data"


def fac(fid, activity, territory="63", coords=(45.0, 3.0)):
    quality = GeocodeQuality.FAILED if coords is None else GeocodeQuality.EXACT
    return Facility(fid, activity, f"addr {fid}", territory, coords, quality)


@pytest.fixture()
def world():
    """A small hand-checkable universe around one buyer.

    B1 buys from 22.29 (intensity 0.3) and 13.96 (0.1).  In the toy
    embedding 25.11 sits close to 22.29 (score ~1.02) while everything
    else is far, so 25.11 carriers become alternatives.
    """
    registry = FacilityRegistry(
        {
            "B1": fac("B1", "20.16", coords=(45.0, 3.0)),
            "S1": fac("S1", "22.29", coords=(45.05, 3.0)),
            "S2": fac("S2", "22.29", coords=(45.10, 3.0)),
            "S3": fac("S3", "13.96", coords=(45.02, 3.0)),
            "A1": fac("A1", "25.11", coords=(45.03, 3.0)),
            "A2": fac("A2", "25.11", coords=(45.04, 3.0)),
            "O1": fac("O1", "22.29", territory="69", coords=(45.06, 3.0)),
            "X1": fac("X1", "22.29", coords=(48.0, 3.0)),  # ~334 km away
            "T1": fac("T1", "22.29", coords=None),
            "NB": fac("NB", "20.16", coords=None),
        }
    )
    relations = SupplierRelationTable({"20.16": (("22.29", 0.3), ("13.96", 0.1))})
    vectors = ActivityVectorSet(
        2,
        {
            "22.29": np.array([1.0, 0.0]),
            "25.11": np.array([0.98, 0.2]),
            "13.96": np.array([0.0, 1.0]),
            "20.16": np.array([0.5, 0.5]),
        },
    )
    return EngineArtifacts(registry, SpatialIndex.build(registry), relations, vectors)


def config(**overrides):
    base = dict(radius_km=100.0, max_score=1.25, k_per_activity=5, territory=None)
    base.update(overrides)
    return EngineConfig(**base)


class TestRecommend:
    def test_direct_ordering_intensity_then_distance_then_id(self, world):
        recs = recommend("B1", world, config())
        assert [r.facility_id for r in recs.direct] == ["S1", "O1", "S2", "S3"]
        assert [r.supplier_activity for r in recs.direct] == [
            "22.29",
            "22.29",
            "22.29",
            "13.96",
        ]
        assert recs.direct[0].intensity == 0.3
        assert recs.direct[3].intensity == 0.1
        # distances are real radius-query values
        assert recs.direct[0].distance_km == pytest.approx(5.559, abs=0.01)

    def test_out_of_radius_excluded(self, world):
        recs = recommend("B1", world, config())
        assert "X1" not in {r.facility_id for r in recs.direct}
        recs_wide = recommend("B1", world, config(radius_km=1000.0))
        assert "X1" in {r.facility_id for r in recs_wide.direct}

    def test_alternatives_substitute_nearby_activity(self, world):
        recs = recommend("B1", world, config())
        assert [r.facility_id for r in recs.alternative] == ["A1", "A2"]
        alt = recs.alternative[0]
        assert alt.activity == "25.11"
        assert alt.substituted_activity == "22.29"
        assert alt.intensity == 0.3
        assert alt.proximity_score == pytest.approx(1.0206, abs=1e-3)
        assert alt.proximity_score <= 1.25

    def test_max_score_cuts_alternatives(self, world):
        recs = recommend("B1", world, config(max_score=1.01))
        assert recs.alternative == ()

    def test_conjunctive_territory_narrows_radius_pool(self, world):
        recs = recommend("B1", world, config(territory="63"))
        assert [r.facility_id for r in recs.direct] == ["S1", "S2", "S3"]

    def test_fallback_uses_buyer_territory_when_no_coordinates(self, world):
        recs = recommend("NB", world, config())
        # no distance restriction, coordinate-less suppliers included
        assert [r.facility_id for r in recs.direct] == ["S1", "S2", "T1", "X1", "S3"]
        assert all(r.distance_km is None for r in recs.direct)

    def test_direct_wins_over_alternative(self, world):
        relations = SupplierRelationTable(
            {"20.16": (("22.29", 0.3), ("25.11", 0.05))}
        )
        artifacts = EngineArtifacts(world.registry, world.index, relations, world.vectors)
        recs = recommend("B1", artifacts, config())
        direct_ids = {r.facility_id for r in recs.direct}
        alt_ids = {r.facility_id for r in recs.alternative}
        assert {"A1", "A2"} <= direct_ids
        assert direct_ids & alt_ids == set()

    def test_buyer_never_recommends_itself(self, world):
        registry = FacilityRegistry(
            dict(world.registry.facilities) | {"B2": fac("B2", "22.29", coords=(45.0, 3.0))}
        )
        artifacts = EngineArtifacts(
            registry, SpatialIndex.build(registry), world.relations, world.vectors
        )
        recs = recommend("B2", artifacts, config())
        assert "B2" not in {r.facility_id for r in recs.direct}

    def test_unknown_buyer(self, world):
        with pytest.raises(UnknownFacilityError):
            recommend("NOPE", world, config())

    def test_activity_without_relations_gives_empty_set(self, world):
        registry = FacilityRegistry(
            dict(world.registry.facilities) | {"Z1": fac("Z1", "99.99")}
        )
        artifacts = EngineArtifacts(
            registry, SpatialIndex.build(registry), world.relations, world.vectors
        )
        recs = recommend("Z1", artifacts, config())
        assert recs.direct == () and recs.alternative == ()


class TestSynergyGraph:
    def test_every_buyer_is_a_node_even_isolated(self, world):
        graph = build_synergy_graph(world, config())
        node_ids = {n.id for n in graph.nodes}
        assert {f.id for f in world.registry} <= node_ids

    def test_nodes_sorted_edges_sorted(self, world):
        graph = build_synergy_graph(world, config())
        assert [n.id for n in graph.nodes] == sorted(n.id for n in graph.nodes)
        keys = [(e.source, e.target, e.kind) for e in graph.edges]
        assert keys == sorted(keys)

    def test_coordinate_less_node_has_null_position(self, world):
        graph = build_synergy_graph(world, config())
        t1 = next(n for n in graph.nodes if n.id == "T1")
        assert t1.lat is None and t1.lon is None

    def test_territory_scope_restricts_buyers_not_suppliers(self, world):
        graph = build_synergy_graph(world, config(territory="63"))
        sources = {e.source for e in graph.edges}
        by_id = {f.id: f for f in world.registry}
        assert all(by_id[s].territory == "63" for s in sources)
        # O1 (69) cannot be a buyer and, with the conjunctive filter,
        # cannot be recommended either
        assert "O1" not in {n.id for n in graph.nodes}

    def test_edge_payload_kinds(self, world):
        graph = build_synergy_graph(world, config())
        kinds = {e.kind for e in graph.edges}
        assert kinds == {"direct", "alternative"}
        for e in graph.edges:
            if e.kind == "direct":
                assert e.score is None
            else:
                assert e.score is not None and e.score >= 1.0


class TestFilterGraph:
    @pytest.fixture()
    def graph(self):
        nodes = (
            GraphNode("F1", "22.29", "63", 45.0, 3.0),
            GraphNode("F2", "25.11", "63", 45.1, 3.0),
            GraphNode("F3", "22.29", "69", 45.2, 3.0),
        )
        edges = (
            GraphEdge("F1", "F2", "direct", 0.3, None),
            GraphEdge("F1", "F3", "alternative", 0.1, 1.05),
            GraphEdge("F3", "F1", "direct", 0.2, None),
        )
        return SynergyGraph(nodes, edges)

    def test_kind_filter_keeps_all_nodes(self, graph):
        got = filter_graph(graph, kind="direct")
        assert len(got.nodes) == 3
        assert [e.kind for e in got.edges] == ["direct", "direct"]

    def test_territory_filter_keeps_referenced_outsiders(self, graph):
        got = filter_graph(graph, territory="63")
        assert {e.source for e in got.edges} == {"F1"}
        # F3 stays because an in-territory buyer references it
        assert {n.id for n in got.nodes} == {"F1", "F2", "F3"}

    def test_combined_filters(self, graph):
        got = filter_graph(graph, territory="63", kind="direct")
        assert [(e.source, e.target) for e in got.edges] == [("F1", "F2")]
        assert {n.id for n in got.nodes} == {"F1", "F2"}

    def test_unknown_territory_empty(self, graph):
        got = filter_graph(graph, territory="99")
        assert got.nodes == () and got.edges == ()


class TestSerialization:
    def test_recommendation_bytes_are_canonical(self):
        recs = RecommendationSet(
            "B1",
            (DirectRecommendation("S1", "22.29", 1 / 3, 5.5),),
            (AlternativeRecommendation("A1", "25.11", "22.29", 1.0206, 0.3, None),),
        )
        expected = (
            '{"alternative":[{"activity":"25.11","distance_km":null,'
            '"facility_id":"A1","intensity":0.3,"proximity_score":1.0206,'
            '"substituted_activity":"22.29"}],"buyer":"B1","direct":'
            '[{"distance_km":5.5,"facility_id":"S1","intensity":0.333333333,'
            '"supplier_activity":"22.29"}]}\n'
        )
        assert serialize_recommendation(recs) == expected.encode("utf-8")

    def test_graph_round_trip(self):
        graph = SynergyGraph(
            (GraphNode("F1", "22.29", "63", 45.0, 3.0), GraphNode("F2", "25.11", "63", None, None)),
            (GraphEdge("F1", "F2", "alternative", 0.25, 1.05),),
        )
        back = graph_from_payload(json.loads(serialize_graph(graph)))
        assert back == graph

    def test_edge_csv(self):
        graph = SynergyGraph(
            (GraphNode("F1", "22.29", "63", 45.0, 3.0),),
            (
                GraphEdge("F1", "F2", "direct", 0.3, None),
                GraphEdge("F1", "F3", "alternative", 0.1, 1.05),
            ),
        )
        buffer = io.StringIO()
        graph_to_edge_csv(graph, buffer)
        lines = buffer.getvalue().splitlines()
        assert lines[0] == "source,target,kind,weight,score"
        assert lines[1] == "F1,F2,direct,0.300000000,"
        assert lines[2] == "F1,F3,alternative,0.100000000,1.050000000"


class TestGoldenRecommendation:
    def test_desk_buyer_matches_frozen_output(self, desk_artifacts, desk_config):
        recs = recommend("F01", desk_artifacts, desk_config)
        with open(f"{DATA_DIR}/golden_recommendation.json", "rb") as fh:
            golden = fh.read()
        assert serialize_recommendation(recs) == golden

    def test_golden_shape_spot_checks(self, desk_artifacts, desk_config):
        recs = recommend("F01", desk_artifacts, desk_config)
        assert len(recs.direct) == 12
        assert len(recs.alternative) == 1
        assert recs.alternative[0].facility_id == "F08"
        assert recs.alternative[0].substituted_activity == "13.96"
        # F18 sits just inside the default 100 km radius
        f18 = next(r for r in recs.direct if r.facility_id == "F18")
        assert f18.distance_km == pytest.approx(98.529, abs=0.01)
