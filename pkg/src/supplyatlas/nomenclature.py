"""Classification crosswalks with occurrence-based weights.

Correspondence tables between industry and product classifications are
rarely one-to-one.  This module turns raw code pairs into weighted
mappings whose weights sum to one per source code, composes mappings
across intermediate systems, and derives export-share weights that tie
an activity to the products it can stand for.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import IO, Mapping, Union

from .complexity import ExportMatrix
from .errors import ConfigurationError, DomainError, ParseError

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-9

# classification roster accepted by the file-level entry points
KNOWN_SYSTEMS = frozenset(
    {"BEA", "NAICS", "NACE2", "CPA21", "HS1992", "HS2017"}
)


def normalize_code(code: str) -> str:
    """Canonical code form: stripped, upper-cased, leading zeros kept."""
    return code.strip().upper()


@dataclass(frozen=True)
class RawCorrespondence:
    """Unweighted code pairs between two systems, duplicates preserved."""

    source_system: str
    target_system: str
    pairs: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class UnmappedEntry:
    """A source code that produced no usable target, with the reason."""

    source: str
    reason: str


@dataclass(frozen=True)
class WeightedMapping:
    """source code -> ((target code, weight), ...) with weights summing to 1.

    Target tuples are sorted by code; weights are strictly positive and a
    source never repeats a target.
    """

    source_system: str
    target_system: str
    entries: Mapping[str, tuple[tuple[str, float], ...]]

    def __post_init__(self):
        for source, targets in self.entries.items():
            if not targets:
                raise DomainError(f"{source!r} has an empty target list")
            codes = [t for t, _ in targets]
            if len(set(codes)) != len(codes):
                raise DomainError(f"{source!r} repeats a target code")
            if any(w <= 0 for _, w in targets):
                raise DomainError(f"{source!r} carries a non-positive weight")
            total = sum(w for _, w in targets)
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise DomainError(
                    f"weights for {source!r} sum to {total!r}, expected 1"
                )
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))


@dataclass(frozen=True)
class ProductWeightTable:
    """activity code -> ((product code, weight), ...), weights summing to 1."""

    country: str
    entries: Mapping[str, tuple[tuple[str, float], ...]]

    def __post_init__(self):
        for activity, weights in self.entries.items():
            total = sum(w for _, w in weights)
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise DomainError(
                    f"product weights for {activity!r} sum to {total!r}, expected 1"
                )
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))


def parse_correspondence(
    source: Union[str, Path, IO[str]],
    source_system: str,
    target_system: str,
    known_systems: frozenset[str] = KNOWN_SYSTEMS,
) -> RawCorrespondence:
    """Read a two-column ``source,target`` CSV of code pairs.

    Duplicate rows are kept: repetition is what the occurrence weights
    are built from.
    """
    for name in (source_system, target_system):
        if name not in known_systems:
            raise ConfigurationError(f"unknown classification system {name!r}")
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_correspondence(fh, source_system, target_system, known_systems)

    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["source", "target"]:
        raise ParseError("expected header 'source,target'", line=1)
    pairs: list[tuple[str, str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
        src, dst = normalize_code(row[0]), normalize_code(row[1])
        if not src or not dst:
            raise ParseError("empty code", line=lineno)
        pairs.append((src, dst))
    return RawCorrespondence(source_system, target_system, tuple(pairs))


def weight_correspondence(raw: RawCorrespondence) -> WeightedMapping:
    """Weight a single correspondence by how often each pair occurs.

    A source listed against k distinct targets with equal row counts gets
    1/k per target; repeated rows tilt the split toward the repeated
    target.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for src, dst in raw.pairs:
        counts[src][dst] += 1
    entries = {}
    for src in sorted(counts):
        total = sum(counts[src].values())
        entries[src] = tuple(sorted((dst, n / total) for dst, n in counts[src].items()))
    return WeightedMapping(raw.source_system, raw.target_system, entries)


def build_weighted_chain(
    first_hop: RawCorrespondence, second_hop: RawCorrespondence
) -> tuple[WeightedMapping, list[UnmappedEntry]]:
    """Chain two raw correspondences into one weighted source->final mapping.

    Each source splits evenly over its distinct intermediate codes; each
    intermediate splits over final codes proportionally to how often the
    (intermediate, final) pair occurs in the second table.  Sources whose
    intermediates never reach a final code land in the unmapped report,
    and surviving weights are renormalised to sum to one.
    """
    if first_hop.target_system != second_hop.source_system:
        raise ConfigurationError(
            f"cannot chain {first_hop.target_system!r} into {second_hop.source_system!r}"
        )

    branches: dict[str, list[str]] = defaultdict(list)
    for src, mid in first_hop.pairs:
        if mid not in branches[src]:
            branches[src].append(mid)

    occurrences: dict[str, Counter] = defaultdict(Counter)
    for mid, final in second_hop.pairs:
        occurrences[mid][final] += 1

    entries: dict[str, tuple[tuple[str, float], ...]] = {}
    unmapped: list[UnmappedEntry] = []
    for src in sorted(branches):
        mids = branches[src]
        acc: dict[str, float] = defaultdict(float)
        for mid in mids:
            occ = occurrences.get(mid)
            if not occ:
                continue
            mid_total = sum(occ.values())
            for final, count in occ.items():
                acc[final] += (1.0 / len(mids)) * (count / mid_total)
        if not acc:
            unmapped.append(
                UnmappedEntry(src, "no final code reachable through the intermediate system")
            )
            continue
        total = sum(acc.values())
        entries[src] = tuple(sorted((code, w / total) for code, w in acc.items()))

    mapping = WeightedMapping(first_hop.source_system, second_hop.target_system, entries)
    if unmapped:
        logger.warning(
            "%d %s codes have no %s image",
            len(unmapped),
            first_hop.source_system,
            second_hop.target_system,
        )
    return mapping, unmapped


def compose_mappings(
    first: WeightedMapping, second: WeightedMapping
) -> tuple[WeightedMapping, list[UnmappedEntry]]:
    """Multiply two weighted mappings through their shared middle system.

    Weights of all two-step paths to the same final code add up; sources
    stranded because none of their intermediates appear in the second
    mapping go to the unmapped report.  Output weights are renormalised.
    """
    if first.target_system != second.source_system:
        raise ConfigurationError(
            f"cannot compose {first.target_system!r} with {second.source_system!r}"
        )
    entries: dict[str, tuple[tuple[str, float], ...]] = {}
    unmapped: list[UnmappedEntry] = []
    for src in sorted(first.entries):
        acc: dict[str, float] = defaultdict(float)
        for mid, w1 in first.entries[src]:
            for final, w2 in second.entries.get(mid, ()):
                acc[final] += w1 * w2
        if not acc:
            unmapped.append(
                UnmappedEntry(src, "no intermediate code present in the second mapping")
            )
            continue
        total = sum(acc.values())
        entries[src] = tuple(sorted((code, w / total) for code, w in acc.items()))
    return WeightedMapping(first.source_system, second.target_system, entries), unmapped


def product_weights(
    exports: ExportMatrix,
    activity_products: WeightedMapping,
    country: str,
) -> tuple[ProductWeightTable, list[UnmappedEntry]]:
    """Share of the country's exports each product takes within its activity.

    Only the membership of ``activity_products`` matters here, not its
    weights.  Products missing from the export matrix count as zero; an
    activity whose products were all zero falls back to uniform weights
    and is reported.
    """
    if country not in exports.country_index:
        raise DomainError(f"country {country!r} not present in the export matrix")
    warnings: list[UnmappedEntry] = []
    entries: dict[str, tuple[tuple[str, float], ...]] = {}
    for activity in sorted(activity_products.entries):
        products = [code for code, _ in activity_products.entries[activity]]
        values = [
            exports.value(country, p) if p in exports.product_index else 0.0
            for p in products
        ]
        total = sum(values)
        if total > 0:
            entries[activity] = tuple(
                (p, v / total) for p, v in zip(products, values) if v > 0
            )
        else:
            warnings.append(
                UnmappedEntry(
                    activity,
                    f"no exports from {country} for any associated product; uniform fallback",
                )
            )
            entries[activity] = tuple((p, 1.0 / len(products)) for p in products)
    for warning in warnings:
        logger.warning("activity %s: %s", warning.source, warning.reason)
    return ProductWeightTable(country, entries), warnings


def mapping_to_csv(mapping: WeightedMapping, sink: Union[str, Path, IO[str]]) -> None:
    """Write ``source,target,weight`` rows, weights with 9 decimal digits."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            mapping_to_csv(mapping, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["source", "target", "weight"])
    for source in sorted(mapping.entries):
        for target, weight in mapping.entries[source]:
            writer.writerow([source, target, f"{weight:.9f}"])


def mapping_from_csv(
    source: Union[str, Path, IO[str]], source_system: str, target_system: str
) -> WeightedMapping:
    """Read back a ``source,target,weight`` table written by :func:`mapping_to_csv`.

    Weights are renormalised per source so the 9-digit rounding of the
    writer cannot accumulate into a validation failure.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return mapping_from_csv(fh, source_system, target_system)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["source", "target", "weight"]:
        raise ParseError("expected header 'source,target,weight'", line=1)
    acc: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        src, dst = normalize_code(row[0]), normalize_code(row[1])
        try:
            weight = float(row[2])
        except ValueError:
            raise ParseError(f"weight {row[2]!r} is not a number", line=lineno)
        if weight <= 0:
            raise ParseError("weights must be positive", line=lineno)
        if dst in acc[src]:
            raise ParseError(f"duplicate target {dst!r} for {src!r}", line=lineno)
        acc[src][dst] = weight
    entries = {}
    for src in sorted(acc):
        total = sum(acc[src].values())
        entries[src] = tuple(sorted((dst, w / total) for dst, w in acc[src].items()))
    return WeightedMapping(source_system, target_system, entries)


def unmapped_to_csv(entries: list[UnmappedEntry], sink: Union[str, Path, IO[str]]) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            unmapped_to_csv(entries, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["source", "reason"])
    for entry in sorted(entries, key=lambda e: e.source):
        writer.writerow([entry.source, entry.reason])


def weights_to_csv(table: ProductWeightTable, sink: Union[str, Path, IO[str]]) -> None:
    """Write ``activity,product,weight`` rows, weights with 9 decimal digits."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            weights_to_csv(table, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["activity", "product", "weight"])
    for activity in sorted(table.entries):
        for product, weight in table.entries[activity]:
            writer.writerow([activity, product, f"{weight:.9f}"])


def weights_from_csv(source: Union[str, Path, IO[str]], country: str) -> ProductWeightTable:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return weights_from_csv(fh, country)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["activity", "product", "weight"]:
        raise ParseError("expected header 'activity,product,weight'", line=1)
    acc: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        try:
            weight = float(row[2])
        except ValueError:
            raise ParseError(f"weight {row[2]!r} is not a number", line=lineno)
        acc[normalize_code(row[0])][normalize_code(row[1])] = weight
    entries = {}
    for activity in sorted(acc):
        total = sum(acc[activity].values())
        if total <= 0:
            raise ParseError(f"weights for {activity!r} are not positive")
        entries[activity] = tuple(sorted((p, w / total) for p, w in acc[activity].items()))
    return ProductWeightTable(country, entries)
