"""Facility registry, address geocoding and great-circle search.

Facilities arrive as CSV rows with an activity code and an optional
coordinate pair.  Rows without coordinates can be resolved later through
a pluggable geocoding client that progressively simplifies the address
string.  Radius search runs on a KD-tree over unit-sphere points with an
exact haversine refinement pass.
"""

from __future__ import annotations

import csv
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import IO, Callable, Iterator, Mapping, Optional, Protocol, Union

import numpy as np
import requests
from scipy.spatial import cKDTree

from .errors import DomainError, GeocoderTransportError, ParseError
from .nomenclature import normalize_code

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088


class GeocodeQuality(str, Enum):
    EXACT = "exact"
    SIMPLIFIED = "simplified"
    FAILED = "failed"


@dataclass(frozen=True)
class Facility:
    """One production site; coordinates are set iff geocoding succeeded."""

    id: str
    activity_code: str
    address: str
    territory: str
    coordinates: Optional[tuple[float, float]]  # (lat, lon) degrees
    geocode_quality: GeocodeQuality

    def __post_init__(self):
        if (self.coordinates is None) != (self.geocode_quality is GeocodeQuality.FAILED):
            raise DomainError(
                f"facility {self.id}: coordinates must be present exactly when "
                "geocoding did not fail"
            )
        if self.coordinates is not None:
            lat, lon = self.coordinates
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise DomainError(f"facility {self.id}: coordinates out of range")


@dataclass(frozen=True)
class IngestIssue:
    subject: str
    reason: str


@dataclass(frozen=True)
class FacilityRegistry:
    """Immutable id -> facility map, iteration ordered by id."""

    facilities: Mapping[str, Facility]

    def __post_init__(self):
        ordered = {fid: self.facilities[fid] for fid in sorted(self.facilities)}
        object.__setattr__(self, "facilities", MappingProxyType(ordered))

    def __iter__(self) -> Iterator[Facility]:
        return iter(self.facilities.values())

    def __len__(self) -> int:
        return len(self.facilities)

    def __contains__(self, facility_id: str) -> bool:
        return facility_id in self.facilities

    def get(self, facility_id: str) -> Optional[Facility]:
        return self.facilities.get(facility_id)


def ingest_facilities(
    source: Union[str, Path, IO[str]]
) -> tuple[FacilityRegistry, list[IngestIssue]]:
    """Read ``id,activity_code,address,territory,lat,lon`` rows.

    Rows with a usable id and activity code are retained; duplicates and
    rows missing either are skipped with an issue.  A complete, in-range
    coordinate pair is accepted as already geocoded; anything else leaves
    the facility without coordinates.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return ingest_facilities(fh)

    reader = csv.reader(source)
    header = next(reader, None)
    expected = ["id", "activity_code", "address", "territory", "lat", "lon"]
    if header is None or [h.strip().lower() for h in header] != expected:
        raise ParseError("expected header 'id,activity_code,address,territory,lat,lon'", line=1)

    facilities: dict[str, Facility] = {}
    issues: list[IngestIssue] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 6:
            raise ParseError(f"expected 6 columns, got {len(row)}", line=lineno)
        fid = row[0].strip()
        activity = normalize_code(row[1])
        address = " ".join(row[2].split())
        territory = row[3].strip()
        if not fid or not activity:
            issues.append(IngestIssue(fid or f"line {lineno}", "missing id or activity code"))
            continue
        if fid in facilities:
            issues.append(IngestIssue(fid, f"line {lineno}: duplicate id, row skipped"))
            continue

        coordinates = None
        quality = GeocodeQuality.FAILED
        lat_raw, lon_raw = row[4].strip(), row[5].strip()
        if lat_raw or lon_raw:
            try:
                lat, lon = float(lat_raw), float(lon_raw)
                if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                    raise ValueError("out of range")
                coordinates = (lat, lon)
                quality = GeocodeQuality.EXACT
            except ValueError:
                issues.append(
                    IngestIssue(fid, f"line {lineno}: unusable coordinates, kept without them")
                )
        facilities[fid] = Facility(fid, activity, address, territory, coordinates, quality)

    for issue in issues:
        logger.warning("%s: %s", issue.subject, issue.reason)
    return FacilityRegistry(facilities), issues


def registry_to_csv(registry: FacilityRegistry, sink: Union[str, Path, IO[str]]) -> None:
    """Write facilities back out with a trailing geocode quality column."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            registry_to_csv(registry, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["id", "activity_code", "address", "territory", "lat", "lon", "quality"])
    for facility in registry:
        lat = "" if facility.coordinates is None else f"{facility.coordinates[0]:.6f}"
        lon = "" if facility.coordinates is None else f"{facility.coordinates[1]:.6f}"
        writer.writerow(
            [
                facility.id,
                facility.activity_code,
                facility.address,
                facility.territory,
                lat,
                lon,
                facility.geocode_quality.value,
            ]
        )


def registry_from_csv(source: Union[str, Path, IO[str]]) -> FacilityRegistry:
    """Read back the seven-column form written by :func:`registry_to_csv`."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return registry_from_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    expected = ["id", "activity_code", "address", "territory", "lat", "lon", "quality"]
    if header is None or [h.strip().lower() for h in header] != expected:
        raise ParseError("expected geocoded facility header", line=1)
    facilities = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 7:
            raise ParseError(f"expected 7 columns, got {len(row)}", line=lineno)
        coordinates = None
        if row[4].strip() and row[5].strip():
            coordinates = (float(row[4]), float(row[5]))
        facilities[row[0]] = Facility(
            row[0],
            row[1],
            row[2],
            row[3],
            coordinates,
            GeocodeQuality(row[6]),
        )
    return FacilityRegistry(facilities)


# --- address geocoding ---------------------------------------------------


class GeocodeClient(Protocol):
    """Resolves one free-text query to (lat, lon) or None for a miss."""

    def lookup(self, query: str) -> Optional[tuple[float, float]]: ...


def address_descent(address: str) -> list[str]:
    """Progressively simpler query strings for a postal address.

    First the full address, then each comma-group suffix (dropping the
    most specific group each time), then the last group with leading
    tokens removed one by one.  Duplicates are dropped, order kept.
    """
    groups = [" ".join(part.split()) for part in address.split(",")]
    groups = [g for g in groups if g]
    if not groups:
        return []
    queries = [", ".join(groups[i:]) for i in range(len(groups))]
    tokens = groups[-1].split()
    queries.extend(" ".join(tokens[i:]) for i in range(1, len(tokens)))
    seen: set[str] = set()
    ordered = []
    for q in queries:
        if q not in seen:
            seen.add(q)
            ordered.append(q)
    return ordered


@dataclass(frozen=True)
class GeocodeResult:
    coordinates: Optional[tuple[float, float]]
    quality: GeocodeQuality
    query: Optional[str] = None  # the query string that finally resolved


def _lookup_with_retry(
    client: GeocodeClient,
    query: str,
    max_attempts: int,
    backoff: float,
    sleep: Callable[[float], None],
) -> Optional[tuple[float, float]]:
    for attempt in range(max_attempts):
        try:
            return client.lookup(query)
        except GeocoderTransportError as exc:
            if attempt + 1 == max_attempts:
                logger.warning("geocode %r gave up after %d attempts: %s", query, max_attempts, exc)
                return None
            sleep(backoff * (2**attempt))
    return None


def geocode_address(
    address: str,
    client: GeocodeClient,
    max_attempts: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> GeocodeResult:
    """Resolve an address, simplifying it step by step on misses.

    A hit on the full address is ``exact``; a hit on any simplified form
    is ``simplified``; transport failures burn their retries and then
    count as misses for that step.
    """
    for step, query in enumerate(address_descent(address)):
        found = _lookup_with_retry(client, query, max_attempts, backoff, sleep)
        if found is not None:
            quality = GeocodeQuality.EXACT if step == 0 else GeocodeQuality.SIMPLIFIED
            return GeocodeResult(found, quality, query)
    return GeocodeResult(None, GeocodeQuality.FAILED, None)


def _cache_key(address: str) -> str:
    return " ".join(address.split()).casefold()


class DiskGeocodeCache:
    """Append-only CSV cache keyed by normalised address, misses included."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, GeocodeResult] = {}
        if self.path.exists():
            with open(self.path, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader, None)
                for row in reader:
                    if len(row) != 4:
                        continue
                    key, lat, lon, quality = row
                    coords = (float(lat), float(lon)) if lat and lon else None
                    self._entries[key] = GeocodeResult(coords, GeocodeQuality(quality))
        else:
            with open(self.path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerow(
                    ["address", "lat", "lon", "quality"]
                )

    def get(self, address: str) -> Optional[GeocodeResult]:
        with self._lock:
            return self._entries.get(_cache_key(address))

    def put(self, address: str, result: GeocodeResult) -> None:
        key = _cache_key(address)
        with self._lock:
            self._entries[key] = result
            lat = "" if result.coordinates is None else f"{result.coordinates[0]:.7f}"
            lon = "" if result.coordinates is None else f"{result.coordinates[1]:.7f}"
            with open(self.path, "a", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerow(
                    [key, lat, lon, result.quality.value]
                )


class AddressApiClient:
    """HTTP adapter for a GeoJSON feature endpoint (``?q=...&limit=1``).

    The top-ranked feature's ``geometry.coordinates`` pair, given as
    (lon, lat), is returned as (lat, lon).  Network and protocol
    failures raise :class:`GeocoderTransportError`; an empty feature
    list is an ordinary miss.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, session=None):
        self.base_url = base_url
        self.timeout = timeout
        self.session = session or requests.Session()

    def lookup(self, query: str) -> Optional[tuple[float, float]]:
        try:
            response = self.session.get(
                self.base_url, params={"q": query, "limit": 1}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise GeocoderTransportError(str(exc)) from exc
        if response.status_code != 200:
            raise GeocoderTransportError(f"geocoder answered HTTP {response.status_code}")
        try:
            features = response.json().get("features", [])
        except ValueError as exc:
            raise GeocoderTransportError("geocoder answered non-JSON body") from exc
        if not features:
            return None
        try:
            lon, lat = features[0]["geometry"]["coordinates"][:2]
            return float(lat), float(lon)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise GeocoderTransportError("malformed feature geometry") from exc


def geocode_registry(
    registry: FacilityRegistry,
    client: GeocodeClient,
    cache: Optional[DiskGeocodeCache] = None,
    parallelism: int = 4,
    max_attempts: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[FacilityRegistry, list[IngestIssue]]:
    """Fill in coordinates for facilities that lack them.

    Lookups run on a small thread pool; each facility's outcome depends
    only on its own address, so the result does not depend on thread
    scheduling.  Failures are reported, not raised.
    """
    pending = [f for f in registry if f.coordinates is None]
    if not pending:
        return registry, []

    def resolve(facility: Facility) -> tuple[str, GeocodeResult]:
        if cache is not None:
            hit = cache.get(facility.address)
            if hit is not None:
                return facility.id, hit
        result = geocode_address(
            facility.address, client, max_attempts=max_attempts, backoff=backoff, sleep=sleep
        )
        if cache is not None:
            cache.put(facility.address, result)
        return facility.id, result

    issues: list[IngestIssue] = []
    updated = dict(registry.facilities)
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        for fid, result in pool.map(resolve, pending):
            if result.coordinates is None:
                issues.append(IngestIssue(fid, "geocoding failed at every simplification step"))
                continue
            updated[fid] = replace(
                updated[fid], coordinates=result.coordinates, geocode_quality=result.quality
            )
    return FacilityRegistry(updated), issues


# --- distance and radius search ------------------------------------------


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on the mean-radius sphere, in km."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2) - math.radians(lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _unit_vectors(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    phi = np.radians(lat)
    lmb = np.radians(lon)
    return np.column_stack(
        (np.cos(phi) * np.cos(lmb), np.cos(phi) * np.sin(lmb), np.sin(phi))
    )


@dataclass(frozen=True)
class SpatialIndex:
    """KD-tree over facilities that have coordinates, queried by radius."""

    ids: tuple[str, ...]
    latitudes: np.ndarray
    longitudes: np.ndarray
    _tree: cKDTree

    @staticmethod
    def build(registry: FacilityRegistry) -> "SpatialIndex":
        located = [f for f in registry if f.coordinates is not None]
        ids = tuple(f.id for f in located)
        lat = np.array([f.coordinates[0] for f in located], dtype=float)
        lon = np.array([f.coordinates[1] for f in located], dtype=float)
        points = _unit_vectors(lat, lon) if located else np.zeros((0, 3))
        return SpatialIndex(ids, lat, lon, cKDTree(points))

    def __len__(self) -> int:
        return len(self.ids)

    def radius_query(
        self, center: tuple[float, float], radius_km: float
    ) -> list[tuple[str, float]]:
        """All indexed facilities within ``radius_km`` of ``center``.

        Results are (id, distance_km) sorted by distance then id.  The
        KD-tree pass uses a slightly inflated chord radius; membership is
        decided by the exact haversine distance.
        """
        if radius_km < 0:
            raise DomainError("radius must be >= 0")
        if not self.ids:
            return []
        lat, lon = center
        angle = min(radius_km / EARTH_RADIUS_KM, math.pi)
        chord = 2.0 * math.sin(angle / 2.0)
        point = _unit_vectors(np.array([lat]), np.array([lon]))[0]
        candidates = self._tree.query_ball_point(point, chord * (1 + 1e-9) + 1e-12)
        hits = []
        for idx in candidates:
            distance = haversine_km(lat, lon, self.latitudes[idx], self.longitudes[idx])
            if distance <= radius_km:
                hits.append((self.ids[idx], distance))
        hits.sort(key=lambda item: (item[1], item[0]))
        return hits
