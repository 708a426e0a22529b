"""Metric MDS by stress majorisation, and activity-level geometry.

Products are embedded so their pairwise distances track co-export
dissimilarity (1 - proximity).  Activities become export-weighted sums
of their product vectors, and closeness between activities is scored by
inverse cosine similarity (1 = same direction, larger = further apart).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import IO, Mapping, Union

import numpy as np
from scipy.spatial.distance import squareform, pdist

from .complexity import ProductProximityMatrix
from .errors import DomainError, ParseError, UnknownActivityError
from .nomenclature import ProductWeightTable, UnmappedEntry

logger = logging.getLogger(__name__)

# cosine similarity is clamped here before inversion, which caps the
# proximity score at 1e6 for orthogonal or opposed vectors
COSINE_FLOOR = 1e-6


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric non-negative dissimilarities with a zero diagonal."""

    products: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        n = len(self.products)
        if n == 0:
            raise DomainError("dissimilarity matrix needs at least one item")
        if len(set(self.products)) != n:
            raise DomainError("duplicate item codes")
        if self.values.shape != (n, n):
            raise DomainError("dissimilarity matrix must be square over the item axis")
        if not np.array_equal(self.values, self.values.T):
            raise DomainError("dissimilarities must be symmetric")
        if self.values.size and self.values.min() < 0:
            raise DomainError("dissimilarities must be non-negative")
        if np.any(np.diag(self.values) != 0):
            raise DomainError("self-dissimilarity must be zero")
        self.values.setflags(write=False)


@dataclass(frozen=True)
class Embedding:
    """Item code -> coordinate vector, all of one dimension, all finite."""

    dimension: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError("embedding dimension must be >= 1")
        for code, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise DomainError(f"vector for {code!r} has shape {vec.shape}")
            if not np.all(np.isfinite(vec)):
                raise DomainError(f"vector for {code!r} is not finite")
            vec.setflags(write=False)
        object.__setattr__(self, "vectors", MappingProxyType(dict(self.vectors)))


@dataclass(frozen=True)
class MdsOptions:
    dimension: int = 8
    max_iters: int = 500
    rel_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError("dimension must be >= 1")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise DomainError("rel_tol must be > 0")


@dataclass(frozen=True)
class MdsResult:
    """Final layout plus the raw-stress trace, one value per iterate."""

    embedding: Embedding
    stress: float
    stress_sequence: tuple[float, ...]

    @property
    def iterations(self) -> int:
        return len(self.stress_sequence) - 1


@dataclass(frozen=True)
class ActivityVectorSet:
    """Activity code -> vector in the product embedding space."""

    dimension: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        for code, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise DomainError(f"vector for {code!r} has shape {vec.shape}")
            vec.setflags(write=False)
        object.__setattr__(self, "vectors", MappingProxyType(dict(self.vectors)))


def to_dissimilarity(proximity: ProductProximityMatrix) -> DissimilarityMatrix:
    """delta = 1 - phi off the diagonal, 0 on it."""
    values = 1.0 - proximity.values
    np.fill_diagonal(values, 0.0)
    return DissimilarityMatrix(proximity.products, values)


def configuration_stress(points: np.ndarray, delta: np.ndarray) -> float:
    """Root of the full double-sum squared misfit between layout and target."""
    return float(np.sqrt(_raw_stress(squareform(pdist(points)), delta)))


def _raw_stress(distances: np.ndarray, delta: np.ndarray) -> float:
    diff = distances - delta
    return float(np.sum(diff * diff))


def mds_embed(
    dissimilarity: DissimilarityMatrix, options: MdsOptions = MdsOptions()
) -> MdsResult:
    """Iterate the Guttman transform from a seeded uniform start layout.

    Raw stress never increases between iterates; iteration stops when the
    relative decrease drops below ``rel_tol`` or ``max_iters`` is reached.
    """
    delta = dissimilarity.values
    n = len(dissimilarity.products)
    if n < 2:
        raise DomainError("need at least two items to embed")

    rng = np.random.default_rng(options.seed)
    x = rng.uniform(-0.5, 0.5, size=(n, options.dimension))

    distances = squareform(pdist(x))
    raw = _raw_stress(distances, delta)
    trace = [raw]
    for _ in range(options.max_iters):
        # Guttman transform with unit weights: x <- B(x) x / n
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(distances > 0, delta / distances, 0.0)
        b = -ratio
        np.fill_diagonal(b, 0.0)
        np.fill_diagonal(b, -b.sum(axis=1))
        x = (b @ x) / n

        distances = squareform(pdist(x))
        new_raw = _raw_stress(distances, delta)
        trace.append(new_raw)
        done = (raw - new_raw) <= options.rel_tol * raw if raw > 0 else True
        raw = new_raw
        if done:
            break

    vectors = {code: x[i].copy() for i, code in enumerate(dissimilarity.products)}
    return MdsResult(
        embedding=Embedding(options.dimension, vectors),
        stress=float(np.sqrt(raw)),
        stress_sequence=tuple(trace),
    )


def activity_vectors(
    embedding: Embedding, weights: ProductWeightTable
) -> tuple[ActivityVectorSet, list[UnmappedEntry]]:
    """Weighted sum of product vectors per activity.

    Products without an embedded vector are dropped and the remaining
    weights renormalised; activities losing every product are omitted and
    reported.
    """
    vectors: dict[str, np.ndarray] = {}
    skipped: list[UnmappedEntry] = []
    for activity in sorted(weights.entries):
        kept = [(p, w) for p, w in weights.entries[activity] if p in embedding.vectors]
        if not kept:
            skipped.append(
                UnmappedEntry(activity, "no associated product has an embedded vector")
            )
            continue
        total = sum(w for _, w in kept)
        vec = np.zeros(embedding.dimension)
        for product, weight in kept:
            vec += (weight / total) * embedding.vectors[product]
        vectors[activity] = vec
    if skipped:
        logger.warning("%d activities have no embeddable product", len(skipped))
    return ActivityVectorSet(embedding.dimension, vectors), skipped


def activity_proximity(a: np.ndarray, b: np.ndarray) -> float:
    """Inverse cosine similarity, clamped into [1, 1e6]; smaller is closer."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0 or norm_b == 0:
        raise DomainError("cannot score a zero-length activity vector")
    cosine = float(np.dot(a, b)) / (norm_a * norm_b)
    cosine = min(1.0, max(COSINE_FLOOR, cosine))
    return 1.0 / cosine


def nearest_activities(
    vectors: ActivityVectorSet, activity: str, k: int, max_score: float
) -> list[tuple[str, float]]:
    """The k closest other activities with a score within ``max_score``.

    Ties on score break on the activity code so the order is total.
    """
    if activity not in vectors.vectors:
        raise UnknownActivityError(activity)
    if k <= 0:
        return []
    own = vectors.vectors[activity]
    scored = []
    for code in vectors.vectors:
        if code == activity:
            continue
        score = activity_proximity(own, vectors.vectors[code])
        if score <= max_score:
            scored.append((score, code))
    scored.sort()
    return [(code, score) for score, code in scored[:k]]


def activity_proximity_table(vectors: ActivityVectorSet) -> dict[tuple[str, str], float]:
    """All pairwise scores keyed by (activity_a, activity_b), a < b."""
    codes = sorted(vectors.vectors)
    table = {}
    for i, a in enumerate(codes):
        for b in codes[i + 1 :]:
            table[(a, b)] = activity_proximity(vectors.vectors[a], vectors.vectors[b])
    return table


def _vectors_to_csv(label: str, dimension: int, rows: Mapping[str, np.ndarray], sink) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow([label] + [f"dim{i}" for i in range(dimension)])
    for code in sorted(rows):
        writer.writerow([code] + [f"{v:.9f}" for v in rows[code]])


def embedding_to_csv(embedding: Embedding, sink: Union[str, Path, IO[str]]) -> None:
    """One row per item: ``product,dim0,...``, coordinates with 9 decimals."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            embedding_to_csv(embedding, fh)
        return
    _vectors_to_csv("product", embedding.dimension, embedding.vectors, sink)


def activity_vectors_to_csv(vectors: ActivityVectorSet, sink: Union[str, Path, IO[str]]) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            activity_vectors_to_csv(vectors, fh)
        return
    _vectors_to_csv("activity", vectors.dimension, vectors.vectors, sink)


def _vectors_from_csv(label: str, source) -> tuple[int, dict[str, np.ndarray]]:
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or len(header) < 2 or header[0].strip().lower() != label:
        raise ParseError(f"expected header '{label},dim0,...'", line=1)
    dimension = len(header) - 1
    rows: dict[str, np.ndarray] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != dimension + 1:
            raise ParseError(f"expected {dimension + 1} columns, got {len(row)}", line=lineno)
        try:
            rows[row[0].strip().upper()] = np.array([float(v) for v in row[1:]])
        except ValueError:
            raise ParseError("coordinates must be numbers", line=lineno)
    return dimension, rows


def embedding_from_csv(source: Union[str, Path, IO[str]]) -> Embedding:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return embedding_from_csv(fh)
    dimension, rows = _vectors_from_csv("product", source)
    return Embedding(dimension, rows)


def activity_vectors_from_csv(source: Union[str, Path, IO[str]]) -> ActivityVectorSet:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return activity_vectors_from_csv(fh)
    dimension, rows = _vectors_from_csv("activity", source)
    return ActivityVectorSet(dimension, rows)


def proximity_scores_to_csv(
    vectors: ActivityVectorSet, sink: Union[str, Path, IO[str]]
) -> None:
    """Pairwise activity scores, upper triangle, ``activity_a,activity_b,score``."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            proximity_scores_to_csv(vectors, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["activity_a", "activity_b", "score"])
    for (a, b), score in sorted(activity_proximity_table(vectors).items()):
        writer.writerow([a, b, f"{score:.9f}"])
