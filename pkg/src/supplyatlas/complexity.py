"""Export specialisation and product co-export proximity.

Pipeline: country x product export values -> revealed comparative
advantage -> binary specialisation matrix -> pairwise product proximity
(the conditional co-export probability, taking the smaller direction).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ParseError

logger = logging.getLogger(__name__)

# Above this many product columns the loader keeps export values in a
# CSR matrix instead of a dense array; every operation accepts both.
DENSE_PRODUCT_LIMIT = 5000

Matrix = Union[np.ndarray, sp.csr_array]


def _is_sparse(values) -> bool:
    return sp.issparse(values)


def _lock(values: Matrix) -> Matrix:
    if not _is_sparse(values):
        values.setflags(write=False)
    return values


def _check_axes(countries, products, values) -> None:
    if len(countries) == 0 or len(products) == 0:
        raise DomainError("matrix needs at least one country and one product")
    if len(set(countries)) != len(countries):
        raise DomainError("duplicate country codes")
    if len(set(products)) != len(products):
        raise DomainError("duplicate product codes")
    if values.shape != (len(countries), len(products)):
        raise DomainError(
            f"value shape {values.shape} does not match axes "
            f"({len(countries)}, {len(products)})"
        )


@dataclass(frozen=True)
class ExportMatrix:
    """Non-negative export values, one row per country, one column per product."""

    countries: tuple[str, ...]
    products: tuple[str, ...]
    values: Matrix
    country_index: dict = field(repr=False, compare=False, default=None)
    product_index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        _check_axes(self.countries, self.products, self.values)
        data = self.values.data if _is_sparse(self.values) else self.values
        if data.size and float(np.min(data)) < 0:
            raise DomainError("export values must be non-negative")
        _lock(self.values)
        object.__setattr__(self, "country_index", {c: i for i, c in enumerate(self.countries)})
        object.__setattr__(self, "product_index", {p: j for j, p in enumerate(self.products)})

    def value(self, country: str, product: str) -> float:
        i = self.country_index[country]
        j = self.product_index[product]
        return float(self.values[i, j])


@dataclass(frozen=True)
class RcaMatrix:
    """Revealed comparative advantage over the same axes as its source."""

    countries: tuple[str, ...]
    products: tuple[str, ...]
    values: Matrix

    def __post_init__(self):
        _check_axes(self.countries, self.products, self.values)
        _lock(self.values)


@dataclass(frozen=True)
class BinaryExportMatrix:
    """0/1 specialisation flags: 1 where RCA reached the threshold."""

    countries: tuple[str, ...]
    products: tuple[str, ...]
    values: Matrix
    threshold: float = 1.0

    def __post_init__(self):
        _check_axes(self.countries, self.products, self.values)
        data = self.values.data if _is_sparse(self.values) else self.values
        if data.size and not np.all((data == 0) | (data == 1)):
            raise DomainError("specialisation matrix must contain only 0 and 1")
        _lock(self.values)


@dataclass(frozen=True)
class ProductProximityMatrix:
    """Symmetric product-by-product proximity in [0, 1], always dense."""

    products: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        n = len(self.products)
        if n == 0:
            raise DomainError("proximity matrix needs at least one product")
        if self.values.shape != (n, n):
            raise DomainError("proximity matrix must be square over the product axis")
        if not np.array_equal(self.values, self.values.T):
            raise DomainError("proximity matrix must be symmetric")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise DomainError("proximity values must lie in [0, 1]")
        _lock(self.values)


def load_exports_csv(source: Union[str, Path, IO[str]]) -> ExportMatrix:
    """Read long-format export data: header ``country,product,value``.

    Duplicate (country, product) rows are summed.  Axes come out sorted
    so the matrix does not depend on row order.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_exports_csv(fh)

    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["country", "product", "value"]:
        raise ParseError("expected header 'country,product,value'", line=1)

    cells: dict[tuple[str, str], float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        country = row[0].strip().upper()
        product = row[1].strip().upper()
        if not country or not product:
            raise ParseError("empty country or product code", line=lineno)
        try:
            value = float(row[2])
        except ValueError:
            raise ParseError(f"value {row[2]!r} is not a number", line=lineno)
        if not np.isfinite(value) or value < 0:
            raise ParseError(f"export value must be finite and >= 0, got {row[2]}", line=lineno)
        cells[(country, product)] = cells.get((country, product), 0.0) + value

    if not cells:
        raise ParseError("export file holds no data rows")

    countries = tuple(sorted({c for c, _ in cells}))
    products = tuple(sorted({p for _, p in cells}))
    ci = {c: i for i, c in enumerate(countries)}
    pi = {p: j for j, p in enumerate(products)}

    if len(products) > DENSE_PRODUCT_LIMIT:
        rows = np.fromiter((ci[c] for c, _ in cells), dtype=np.int64, count=len(cells))
        cols = np.fromiter((pi[p] for _, p in cells), dtype=np.int64, count=len(cells))
        vals = np.fromiter(cells.values(), dtype=np.float64, count=len(cells))
        values: Matrix = sp.csr_array(
            (vals, (rows, cols)), shape=(len(countries), len(products))
        )
    else:
        values = np.zeros((len(countries), len(products)))
        for (c, p), v in cells.items():
            values[ci[c], pi[p]] = v
    return ExportMatrix(countries, products, values)


def compute_rca(exports: ExportMatrix) -> RcaMatrix:
    """Balassa index: a country's share in a product over its share in all trade.

    Cells whose product has no world exports, and rows of countries with
    no exports at all, come out as 0 rather than NaN.
    """
    values = exports.values
    sparse = _is_sparse(values)
    world_by_product = np.asarray(values.sum(axis=0)).ravel()
    country_total = np.asarray(values.sum(axis=1)).ravel()
    world_total = float(country_total.sum())
    if world_total == 0:
        zeros = sp.csr_array(values.shape) if sparse else np.zeros(values.shape)
        return RcaMatrix(exports.countries, exports.products, zeros)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv_product = np.where(world_by_product > 0, 1.0 / world_by_product, 0.0)
        inv_country = np.where(country_total > 0, world_total / country_total, 0.0)

    if sparse:
        rca = values.multiply(inv_product[np.newaxis, :]).multiply(inv_country[:, np.newaxis])
        rca = sp.csr_array(rca)
    else:
        rca = values * inv_product[np.newaxis, :] * inv_country[:, np.newaxis]
    return RcaMatrix(exports.countries, exports.products, rca)


def binarize(rca: RcaMatrix, threshold: float = 1.0) -> BinaryExportMatrix:
    """Flag cells whose RCA reaches ``threshold`` (inclusive)."""
    if not (threshold > 0) or not np.isfinite(threshold):
        raise DomainError("threshold must be a positive finite number")
    if _is_sparse(rca.values):
        mask = rca.values.copy()
        mask.data = (mask.data >= threshold).astype(np.float64)
        mask.eliminate_zeros()
        flags: Matrix = mask
    else:
        flags = (rca.values >= threshold).astype(np.float64)
    return BinaryExportMatrix(rca.countries, rca.products, flags, threshold=threshold)


def product_proximity(m: BinaryExportMatrix) -> ProductProximityMatrix:
    """Minimum of the two conditional co-export probabilities per product pair.

    For products i, j with ubiquity u_i countries, proximity is
    |countries exporting both| / max(u_i, u_j); pairs involving a product
    nobody exports get 0, and the diagonal is 1 for exported products.
    """
    values = m.values
    if _is_sparse(values):
        co = np.asarray((values.T @ values).todense(), dtype=np.float64)
    else:
        co = values.T @ values
    ubiquity = np.asarray(values.sum(axis=0)).ravel()
    denom = np.maximum.outer(ubiquity, ubiquity)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(denom > 0, co / denom, 0.0)
    # exact integer counts keep phi in [0, 1]; clip guards float dust only
    phi = np.clip(phi, 0.0, 1.0)
    phi = (phi + phi.T) / 2.0
    return ProductProximityMatrix(m.products, phi)


def proximity_to_csv(p: ProductProximityMatrix, sink: Union[str, Path, IO[str]]) -> None:
    """Write the upper triangle (diagonal included) as ``product_a,product_b,phi``."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            proximity_to_csv(p, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["product_a", "product_b", "phi"])
    n = len(p.products)
    for i in range(n):
        for j in range(i, n):
            writer.writerow([p.products[i], p.products[j], f"{p.values[i, j]:.9f}"])


def proximity_from_csv(source: Union[str, Path, IO[str]]) -> ProductProximityMatrix:
    """Inverse of :func:`proximity_to_csv`; missing pairs default to 0."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return proximity_from_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["product_a", "product_b", "phi"]:
        raise ParseError("expected header 'product_a,product_b,phi'", line=1)
    cells: dict[tuple[str, str], float] = {}
    codes: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        a, b = row[0].strip().upper(), row[1].strip().upper()
        try:
            phi = float(row[2])
        except ValueError:
            raise ParseError(f"phi {row[2]!r} is not a number", line=lineno)
        codes.update((a, b))
        cells[(a, b)] = phi
    products = tuple(sorted(codes))
    idx = {p: i for i, p in enumerate(products)}
    values = np.zeros((len(products), len(products)))
    for (a, b), phi in cells.items():
        values[idx[a], idx[b]] = phi
        values[idx[b], idx[a]] = phi
    return ProductProximityMatrix(products, values)
