import io
import math

import numpy as np
import pytest

from supplyatlas import facilities
from supplyatlas.errors import DomainError, GeocoderTransportError, ParseError
from supplyatlas.facilities import (
    AddressApiClient,
    DiskGeocodeCache,
    Facility,
    FacilityRegistry,
    GeocodeQuality,
    SpatialIndex,
    address_descent,
    geocode_address,
    geocode_registry,
    haversine_km,
    ingest_facilities,
)

from oracle import oracle_haversine


def fac(fid, activity="22.29", territory="63", coords=(45.0, 3.0)):
    quality = GeocodeQuality.FAILED if coords is None else GeocodeQuality.EXACT
    return Facility(fid, activity, f"addr {fid}", territory, coords, quality)


class TestHaversine:
    def test_paris_lyon_pinned_value(self):
        # checked against an independent high-precision evaluation of the
        # great-circle formula on the mean-radius sphere
        d = haversine_km(48.8566, 2.3522, 45.7640, 4.8357)
        assert d == pytest.approx(391.49947243561, abs=1e-9)

    def test_zero_distance(self):
        assert haversine_km(45.5, 3.25, 45.5, 3.25) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(71)
        for _ in range(50):
            lat1, lat2 = rng.uniform(-90, 90, 2)
            lon1, lon2 = rng.uniform(-180, 180, 2)
            assert haversine_km(lat1, lon1, lat2, lon2) == pytest.approx(
                haversine_km(lat2, lon2, lat1, lon1), abs=1e-9
            )

    def test_antipodal_is_half_circumference(self):
        d = haversine_km(0.0, 0.0, 0.0, 180.0)
        assert d == pytest.approx(math.pi * facilities.EARTH_RADIUS_KM, rel=1e-12)


class TestIngest:
    HEADER = "id,activity_code,address,territory,lat,lon\n"

    def test_accepts_coordinates_from_file(self):
        text = self.HEADER + 'F1,22.29,"1 Rue Haute, Ville",63,45.5,3.2\n'
        registry, issues = ingest_facilities(io.StringIO(text))
        assert issues == []
        f = registry.get("F1")
        assert f.coordinates == (45.5, 3.2)
        assert f.geocode_quality is GeocodeQuality.EXACT

    def test_missing_coordinates_waits_for_geocoding(self):
        text = self.HEADER + "F1,22.29,somewhere,63,,\n"
        registry, issues = ingest_facilities(io.StringIO(text))
        assert issues == []
        f = registry.get("F1")
        assert f.coordinates is None
        assert f.geocode_quality is GeocodeQuality.FAILED

    def test_duplicate_id_skipped_with_issue(self):
        text = self.HEADER + "F1,22.29,a,63,45,3\nF1,25.11,b,69,46,4\n"
        registry, issues = ingest_facilities(io.StringIO(text))
        assert len(registry) == 1
        assert registry.get("F1").activity_code == "22.29"
        assert any("duplicate" in i.reason for i in issues)

    def test_missing_id_or_activity_skipped(self):
        text = self.HEADER + ",22.29,a,63,45,3\nF2,,b,69,46,4\nF3,25.11,c,63,45,3\n"
        registry, issues = ingest_facilities(io.StringIO(text))
        assert [f.id for f in registry] == ["F3"]
        assert len(issues) == 2

    def test_unusable_coordinates_kept_without_them(self):
        text = self.HEADER + "F1,22.29,a,63,91.0,3\nF2,22.29,b,63,abc,3\n"
        registry, issues = ingest_facilities(io.StringIO(text))
        assert registry.get("F1").coordinates is None
        assert registry.get("F2").coordinates is None
        assert len(issues) == 2

    def test_header_error(self):
        with pytest.raises(ParseError) as err:
            ingest_facilities(io.StringIO("id,activity\n"))
        assert err.value.line == 1

    def test_registry_iterates_sorted(self):
        text = self.HEADER + "F2,22.29,a,63,45,3\nF1,25.11,b,63,45,3\n"
        registry, _ = ingest_facilities(io.StringIO(text))
        assert [f.id for f in registry] == ["F1", "F2"]


class TestFacilityInvariant:
    def test_coordinates_require_quality(self):
        with pytest.raises(DomainError):
            Facility("F1", "22.29", "a", "63", (45.0, 3.0), GeocodeQuality.FAILED)
        with pytest.raises(DomainError):
            Facility("F1", "22.29", "a", "63", None, GeocodeQuality.EXACT)

    def test_range_check(self):
        with pytest.raises(DomainError):
            Facility("F1", "22.29", "a", "63", (95.0, 3.0), GeocodeQuality.EXACT)


class TestRegistryCsv:
    def test_round_trip(self):
        registry = FacilityRegistry(
            {
                "F1": fac("F1"),
                "F2": fac("F2", coords=None),
            }
        )
        buffer = io.StringIO()
        facilities.registry_to_csv(registry, buffer)
        back = facilities.registry_from_csv(io.StringIO(buffer.getvalue()))
        assert back.get("F1").coordinates == (45.0, 3.0)
        assert back.get("F2").coordinates is None
        assert back.get("F2").geocode_quality is GeocodeQuality.FAILED


class TestAddressDescent:
    def test_comma_groups_then_tokens(self):
        got = address_descent("12 Rue de la Paix, 75002, Paris 2e")
        assert got == [
            "12 Rue de la Paix, 75002, Paris 2e",
            "75002, Paris 2e",
            "Paris 2e",
            "2e",
        ]

    def test_single_group_token_descent(self):
        assert address_descent("10 Grande Rue Lyon") == [
            "10 Grande Rue Lyon",
            "Grande Rue Lyon",
            "Rue Lyon",
            "Lyon",
        ]

    def test_never_more_steps_than_components(self):
        address = "1 Place, Bourg, 01000, Ain"
        groups = [g for g in address.split(",") if g.strip()]
        tokens = groups[-1].split()
        assert len(address_descent(address)) <= len(groups) + len(tokens)

    def test_whitespace_collapses_and_dedupes(self):
        assert address_descent("  Paris ,  Paris ") == ["Paris, Paris", "Paris"]

    def test_empty_address(self):
        assert address_descent("   ") == []


class ScriptedClient:
    """Geocoding stub driven by a query -> outcome table."""

    def __init__(self, table):
        self.table = table
        self.calls = []

    def lookup(self, query):
        self.calls.append(query)
        outcome = self.table.get(query, None)
        if outcome == "boom":
            raise GeocoderTransportError("scripted failure")
        return outcome


class TestGeocodeAddress:
    def test_full_hit_is_exact(self):
        client = ScriptedClient({"1 Rue Haute, Ville": (45.0, 3.0)})
        result = geocode_address("1 Rue Haute, Ville", client)
        assert result.coordinates == (45.0, 3.0)
        assert result.quality is GeocodeQuality.EXACT

    def test_simplified_hit(self):
        client = ScriptedClient({"Ville": (45.0, 3.0)})
        result = geocode_address("1 Rue Haute, Ville", client)
        assert result.quality is GeocodeQuality.SIMPLIFIED
        assert result.query == "Ville"
        assert client.calls == ["1 Rue Haute, Ville", "Ville"]

    def test_all_misses_fail(self):
        client = ScriptedClient({})
        result = geocode_address("1 Rue Haute, Ville", client)
        assert result.coordinates is None
        assert result.quality is GeocodeQuality.FAILED

    def test_transport_errors_retry_with_backoff_then_move_on(self):
        client = ScriptedClient({"1 Rue Haute, Ville": "boom", "Ville": (45.0, 3.0)})
        sleeps = []
        result = geocode_address(
            "1 Rue Haute, Ville", client, backoff=0.5, sleep=sleeps.append
        )
        # three attempts on the full address, exponential waits in between
        assert client.calls == ["1 Rue Haute, Ville"] * 3 + ["Ville"]
        assert sleeps == [0.5, 1.0]
        assert result.quality is GeocodeQuality.SIMPLIFIED


class TestDiskCache:
    def test_persists_across_instances(self, tmp_path):
        path = tmp_path / "cache.csv"
        cache = DiskGeocodeCache(path)
        cache.put("1 Rue Haute, Ville", facilities.GeocodeResult((45.0, 3.0), GeocodeQuality.EXACT))
        again = DiskGeocodeCache(path)
        hit = again.get("  1 rue haute,   ville ".replace(",", ", "))
        assert hit is not None
        assert hit.coordinates == pytest.approx((45.0, 3.0))

    def test_failures_are_cached_too(self, tmp_path):
        cache = DiskGeocodeCache(tmp_path / "cache.csv")
        cache.put("nowhere", facilities.GeocodeResult(None, GeocodeQuality.FAILED))
        hit = cache.get("nowhere")
        assert hit is not None and hit.coordinates is None


class FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload if payload is not None else {}

    def json(self):
        if isinstance(self._payload, Exception):
            raise self._payload
        return self._payload


class FakeSession:
    def __init__(self, response):
        self.response = response
        self.requests = []

    def get(self, url, params=None, timeout=None):
        self.requests.append((url, params))
        if isinstance(self.response, Exception):
            raise self.response
        return self.response


class TestAddressApiClient:
    def test_returns_lat_lon_from_geojson_order(self):
        session = FakeSession(
            FakeResponse(payload={"features": [{"geometry": {"coordinates": [3.2, 45.5]}}]})
        )
        client = AddressApiClient("http://geo.test/search", session=session)
        assert client.lookup("somewhere") == (45.5, 3.2)
        url, params = session.requests[0]
        assert params == {"q": "somewhere", "limit": 1}

    def test_empty_features_is_a_miss(self):
        session = FakeSession(FakeResponse(payload={"features": []}))
        client = AddressApiClient("http://geo.test/search", session=session)
        assert client.lookup("somewhere") is None

    def test_http_error_is_transport_error(self):
        session = FakeSession(FakeResponse(status_code=503))
        client = AddressApiClient("http://geo.test/search", session=session)
        with pytest.raises(GeocoderTransportError):
            client.lookup("somewhere")

    def test_network_error_is_transport_error(self):
        import requests

        session = FakeSession(requests.ConnectionError("down"))
        client = AddressApiClient("http://geo.test/search", session=session)
        with pytest.raises(GeocoderTransportError):
            client.lookup("somewhere")


class TestGeocodeRegistry:
    def test_fills_missing_coordinates(self):
        registry = FacilityRegistry(
            {"F1": fac("F1"), "F2": fac("F2", coords=None)}
        )
        client = ScriptedClient({"addr F2": (46.0, 4.0)})
        updated, issues = geocode_registry(registry, client, parallelism=2)
        assert issues == []
        assert updated.get("F2").coordinates == (46.0, 4.0)
        assert updated.get("F1").coordinates == (45.0, 3.0)  # untouched

    def test_cache_short_circuits_lookup(self, tmp_path):
        cache = DiskGeocodeCache(tmp_path / "cache.csv")
        cache.put("addr F2", facilities.GeocodeResult((46.0, 4.0), GeocodeQuality.EXACT))
        registry = FacilityRegistry({"F2": fac("F2", coords=None)})
        client = ScriptedClient({})
        updated, issues = geocode_registry(registry, client, cache=cache)
        assert client.calls == []
        assert updated.get("F2").coordinates == (46.0, 4.0)

    def test_failure_reported_not_raised(self):
        registry = FacilityRegistry({"F2": fac("F2", coords=None)})
        updated, issues = geocode_registry(registry, ScriptedClient({}))
        assert updated.get("F2").coordinates is None
        assert [i.subject for i in issues] == ["F2"]


class TestSpatialIndex:
    def random_registry(self, rng, n):
        entries = {}
        for i in range(n):
            lat = float(rng.uniform(40, 52))
            lon = float(rng.uniform(-5, 10))
            entries[f"F{i:03d}"] = fac(f"F{i:03d}", coords=(lat, lon))
        return FacilityRegistry(entries)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(73)
        registry = self.random_registry(rng, 120)
        index = SpatialIndex.build(registry)
        center = (46.2, 2.9)
        for radius in [0.0, 12.5, 63.7, 148.2, 410.9, 1500.0]:
            got = index.radius_query(center, radius)
            expected = []
            for f in registry:
                d = oracle_haversine(center[0], center[1], *f.coordinates)
                if d <= radius:
                    expected.append((f.id, d))
            expected.sort(key=lambda item: (item[1], item[0]))
            assert [fid for fid, _ in got] == [fid for fid, _ in expected]
            for (_, d1), (_, d2) in zip(got, expected):
                assert d1 == pytest.approx(d2, abs=1e-9)

    def test_results_sorted_by_distance_then_id(self):
        registry = FacilityRegistry(
            {
                "FB": fac("FB", coords=(45.0, 3.0)),
                "FA": fac("FA", coords=(45.0, 3.0)),
                "FC": fac("FC", coords=(45.1, 3.0)),
            }
        )
        index = SpatialIndex.build(registry)
        got = index.radius_query((45.0, 3.0), 50.0)
        assert [fid for fid, _ in got] == ["FA", "FB", "FC"]

    def test_skips_facilities_without_coordinates(self):
        registry = FacilityRegistry({"F1": fac("F1"), "F2": fac("F2", coords=None)})
        index = SpatialIndex.build(registry)
        assert len(index) == 1

    def test_empty_index(self):
        index = SpatialIndex.build(FacilityRegistry({}))
        assert index.radius_query((45.0, 3.0), 100.0) == []

    def test_negative_radius_rejected(self):
        index = SpatialIndex.build(FacilityRegistry({"F1": fac("F1")}))
        with pytest.raises(DomainError):
            index.radius_query((45.0, 3.0), -1.0)

    def test_whole_planet_radius(self):
        rng = np.random.default_rng(79)
        registry = self.random_registry(rng, 20)
        index = SpatialIndex.build(registry)
        assert len(index.radius_query((0.0, 0.0), 21000.0)) == 20
