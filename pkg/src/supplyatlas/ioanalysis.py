"""Input-output accounting: coefficients, Leontief totals, projection.

Inter-industry flow tables become technical coefficient matrices
(input per unit of output), total output is recovered from final demand
through a linear solve, and coefficient matrices move between
classifications through a bilinear weighted projection that preserves
total coefficient mass.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import IO, Mapping, Union

import numpy as np

from .errors import DomainError, NumericalError, ParseError
from .nomenclature import UnmappedEntry, WeightedMapping, normalize_code

logger = logging.getLogger(__name__)

# condition estimate above which the Leontief solve is refused
CONDITION_LIMIT = 1e12
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class LoadIssue:
    """A row or industry the loader had to drop or repair."""

    subject: str
    reason: str


@dataclass(frozen=True)
class IOTable:
    """Square inter-industry flows with final demand and total output."""

    industries: tuple[str, ...]
    flows: np.ndarray
    final_demand: np.ndarray
    total_output: np.ndarray

    def __post_init__(self):
        n = len(self.industries)
        if n == 0:
            raise DomainError("table needs at least one industry")
        if len(set(self.industries)) != n:
            raise DomainError("duplicate industry codes")
        if self.flows.shape != (n, n):
            raise DomainError("flow matrix must be square over the industry axis")
        if self.final_demand.shape != (n,) or self.total_output.shape != (n,):
            raise DomainError("vector lengths must match the industry axis")
        if self.flows.size and self.flows.min() < 0:
            raise DomainError("flows must be non-negative")
        if np.any(self.total_output <= 0):
            bad = self.industries[int(np.argmax(self.total_output <= 0))]
            raise DomainError(f"total output must be positive (industry {bad})")
        for arr in (self.flows, self.final_demand, self.total_output):
            arr.setflags(write=False)


@dataclass(frozen=True)
class TechCoefMatrix:
    """Input requirements per unit of output, columns indexed by buyer."""

    industries: tuple[str, ...]
    values: np.ndarray
    column_sum_violations: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.industries)
        if self.values.shape != (n, n):
            raise DomainError("coefficient matrix must be square over the industry axis")
        if self.values.size and self.values.min() < 0:
            raise DomainError("coefficients must be non-negative")
        self.values.setflags(write=False)


@dataclass(frozen=True)
class SupplierRelationTable:
    """buyer activity -> ((supplier activity, intensity), ...) strongest first."""

    entries: Mapping[str, tuple[tuple[str, float], ...]]

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))


def load_io_table(
    flows_source: Union[str, Path, IO[str]],
    industries_source: Union[str, Path, IO[str]],
) -> tuple[IOTable, list[LoadIssue]]:
    """Read an industry sidecar and a long-format flow file.

    Sidecar: ``industry,total_output,final_demand``.  Flows:
    ``supplier_industry,buyer_industry,value``.  Industries without
    positive output are dropped, negative flows clamp to zero, rows
    naming unknown industries are skipped; all three land in the issue
    report instead of raising.
    """
    if isinstance(industries_source, (str, Path)):
        with open(industries_source, newline="", encoding="utf-8") as fh:
            return load_io_table(flows_source, fh)
    if isinstance(flows_source, (str, Path)):
        with open(flows_source, newline="", encoding="utf-8") as fh:
            return load_io_table(fh, industries_source)

    issues: list[LoadIssue] = []

    reader = csv.reader(industries_source)
    header = next(reader, None)
    expected = ["industry", "total_output", "final_demand"]
    if header is None or [h.strip().lower() for h in header] != expected:
        raise ParseError("expected header 'industry,total_output,final_demand'", line=1)
    output: dict[str, float] = {}
    demand: dict[str, float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        code = normalize_code(row[0])
        try:
            x = float(row[1])
            f = float(row[2])
        except ValueError:
            raise ParseError("total_output and final_demand must be numbers", line=lineno)
        if code in output:
            raise ParseError(f"duplicate industry {code!r}", line=lineno)
        if x <= 0:
            issues.append(LoadIssue(code, f"dropped: total output {x} is not positive"))
            continue
        output[code] = x
        demand[code] = f

    industries = tuple(sorted(output))
    if not industries:
        raise DomainError("no industry has positive total output")
    index = {code: i for i, code in enumerate(industries)}
    flows = np.zeros((len(industries), len(industries)))

    reader = csv.reader(flows_source)
    header = next(reader, None)
    expected = ["supplier_industry", "buyer_industry", "value"]
    if header is None or [h.strip().lower() for h in header] != expected:
        raise ParseError("expected header 'supplier_industry,buyer_industry,value'", line=1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        supplier = normalize_code(row[0])
        buyer = normalize_code(row[1])
        try:
            value = float(row[2])
        except ValueError:
            raise ParseError(f"flow value {row[2]!r} is not a number", line=lineno)
        if supplier not in index or buyer not in index:
            missing = supplier if supplier not in index else buyer
            issues.append(LoadIssue(missing, f"line {lineno}: flow names unknown industry"))
            continue
        if value < 0:
            issues.append(LoadIssue(supplier, f"line {lineno}: negative flow clamped to 0"))
            value = 0.0
        flows[index[supplier], index[buyer]] += value

    table = IOTable(
        industries=industries,
        flows=flows,
        final_demand=np.array([demand[c] for c in industries]),
        total_output=np.array([output[c] for c in industries]),
    )
    for issue in issues:
        logger.warning("%s: %s", issue.subject, issue.reason)
    return table, issues


def technical_coefficients(table: IOTable) -> TechCoefMatrix:
    """Divide each flow column by the buyer's total output.

    Buyers whose input bundle costs as much as their output (column sum
    >= 1) are recorded as violations; they poison the Leontief solve but
    not the supplier ranking.
    """
    if np.any(table.total_output <= 0):
        bad = table.industries[int(np.argmax(table.total_output <= 0))]
        raise DomainError(f"zero total output for industry {bad}")
    values = table.flows / table.total_output[np.newaxis, :]
    sums = values.sum(axis=0)
    violations = tuple(
        table.industries[j] for j in range(len(table.industries)) if sums[j] >= 1.0
    )
    if violations:
        logger.warning("column sums reach 1 for: %s", ", ".join(violations))
    return TechCoefMatrix(table.industries, values, violations)


def leontief_output(coefficients: TechCoefMatrix, final_demand: np.ndarray) -> np.ndarray:
    """Solve (I - A) X = F for total output X.

    Refuses coefficient matrices with a column sum at or above one, an
    ill-conditioned (I - A), or a solution whose back-substituted
    residual exceeds the accuracy contract.
    """
    a = coefficients.values
    n = len(coefficients.industries)
    final_demand = np.asarray(final_demand, dtype=float)
    if final_demand.shape != (n,):
        raise DomainError(f"final demand must have length {n}")
    if coefficients.column_sum_violations:
        raise DomainError(
            "column sums must stay below 1 to invert; offending: "
            + ", ".join(coefficients.column_sum_violations)
        )
    sums = a.sum(axis=0)
    if sums.size and sums.max() >= 1.0:
        raise DomainError("column sums must stay below 1 to invert")

    m = np.eye(n) - a
    condition = np.linalg.cond(m)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NumericalError(f"system too ill-conditioned to solve ({condition:.3e})")
    x = np.linalg.solve(m, final_demand)
    scale = float(np.max(np.abs(final_demand)))
    residual = float(np.max(np.abs(m @ x - final_demand)))
    if scale > 0 and residual / scale > RESIDUAL_TOL:
        raise NumericalError(f"solve residual {residual / scale:.3e} exceeds {RESIDUAL_TOL}")
    return x


def project_values(
    values: np.ndarray, industries: tuple[str, ...], mapping: WeightedMapping
) -> tuple[np.ndarray, tuple[str, ...], list[UnmappedEntry]]:
    """Bilinear re-aggregation of a square industry matrix into target codes.

    Entry (k, l) of the result sums w_ik * v_ij * w_jl over all source
    pairs.  Sources without a mapping entry contribute nothing and are
    reported.
    """
    unmapped = [
        UnmappedEntry(code, "no mapping entry for this industry")
        for code in industries
        if code not in mapping.entries
    ]
    targets = sorted(
        {
            code
            for industry in industries
            for code, _ in mapping.entries.get(industry, ())
        }
    )
    if not targets:
        raise DomainError("no source industry reaches a target code")
    tindex = {code: k for k, code in enumerate(targets)}
    w = np.zeros((len(industries), len(targets)))
    for i, industry in enumerate(industries):
        for code, weight in mapping.entries.get(industry, ()):
            w[i, tindex[code]] = weight
    return w.T @ values @ w, tuple(targets), unmapped


def project_to_nace(
    coefficients: TechCoefMatrix, mapping: WeightedMapping
) -> tuple[TechCoefMatrix, list[UnmappedEntry]]:
    """Project a coefficient matrix into the mapping's target classification."""
    values, targets, unmapped = project_values(
        coefficients.values, coefficients.industries, mapping
    )
    sums = values.sum(axis=0)
    violations = tuple(targets[j] for j in range(len(targets)) if sums[j] >= 1.0)
    return TechCoefMatrix(targets, values, violations), unmapped


def _rank_columns(
    values: np.ndarray,
    codes: tuple[str, ...],
    min_intensity: float,
    top_k: int,
) -> SupplierRelationTable:
    entries = {}
    for j, buyer in enumerate(codes):
        candidates = [
            (codes[i], float(values[i, j]))
            for i in range(len(codes))
            if values[i, j] >= min_intensity
        ]
        candidates.sort(key=lambda item: (-item[1], item[0]))
        entries[buyer] = tuple(candidates[:top_k])
    return SupplierRelationTable(entries)


def supplier_relations(
    coefficients: TechCoefMatrix, min_intensity: float = 0.01, top_k: int = 20
) -> SupplierRelationTable:
    """Strongest input activities per buyer, ranked by coefficient.

    Ties break on the supplier code; entries below ``min_intensity`` are
    dropped and at most ``top_k`` survive per buyer.
    """
    if min_intensity < 0:
        raise DomainError("min_intensity must be >= 0")
    if top_k < 0:
        raise DomainError("top_k must be >= 0")
    return _rank_columns(coefficients.values, coefficients.industries, min_intensity, top_k)


def flow_relations(
    table: IOTable,
    mapping: WeightedMapping,
    min_intensity: float = 0.01,
    top_k: int = 20,
) -> tuple[SupplierRelationTable, list[UnmappedEntry]]:
    """Alternative ranking on projected raw flows instead of coefficients.

    Same projection and ranking rules, but the magnitude compared against
    ``min_intensity`` is monetary flow, so thresholds differ in scale.
    """
    values, targets, unmapped = project_values(table.flows, table.industries, mapping)
    return _rank_columns(values, targets, min_intensity, top_k), unmapped


def relations_to_json(table: SupplierRelationTable, sink: Union[str, Path, IO[str]]) -> None:
    """Write ``{buyer: [{"supplier": ..., "intensity": ...}, ...]}``."""
    payload = {
        buyer: [
            {"supplier": supplier, "intensity": intensity}
            for supplier, intensity in table.entries[buyer]
        ]
        for buyer in sorted(table.entries)
    }
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    json.dump(payload, sink, indent=2, sort_keys=True)
    sink.write("\n")


def relations_from_json(source: Union[str, Path, IO[str]]) -> SupplierRelationTable:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return relations_from_json(fh)
    payload = json.load(source)
    entries = {}
    for buyer, suppliers in payload.items():
        entries[buyer] = tuple(
            (item["supplier"], float(item["intensity"])) for item in suppliers
        )
    return SupplierRelationTable(entries)
