"""Engine configuration.

A single flat JSON file drives the pipeline, the CLI and the API.  Keys
use dots purely as visual grouping ("mds.m"); the file itself has no
nesting.  Every key is optional and falls back to the defaults below.

Recognised keys:

    radius_km       search radius around a buyer, km          (default 100)
    max_score       activity proximity cutoff, >= 1           (default 1.25)
    k_per_activity  neighbour activities kept per supplier    (default 5)
    min_intensity   technical-coefficient floor for suppliers (default 0.01)
    top_k           supplier activities kept per buyer        (default 20)
    rca_threshold   specialisation cutoff on RCA              (default 1.0)
    country         reference country for product weights     (default "FRA")
    territory       restrict buyers to one territory code     (default null)
    rank_by         "coefficient" or "flow" supplier ranking  (default "coefficient")
    mds.m           embedding dimension                       (default 8)
    mds.max_iters   stress-majorisation iteration cap         (default 500)
    mds.rel_tol     relative stress-decrease stop tolerance   (default 1e-7)
    seed            RNG seed for the embedding start layout   (default 42)
    geocoder_url    address lookup endpoint, null disables it (default null)
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigurationError

RANK_MODES = frozenset({"coefficient", "flow"})


@dataclass(frozen=True)
class EngineConfig:
    radius_km: float = 100.0
    max_score: float = 1.25
    k_per_activity: int = 5
    min_intensity: float = 0.01
    top_k: int = 20
    rca_threshold: float = 1.0
    country: str = "FRA"
    territory: str | None = None
    rank_by: str = "coefficient"
    mds_dimension: int = 8
    mds_max_iters: int = 500
    mds_rel_tol: float = 1e-7
    seed: int = 42
    geocoder_url: str | None = None

    def __post_init__(self):
        if self.radius_km < 0:
            raise ConfigurationError("radius_km must be >= 0")
        if self.max_score < 1.0:
            raise ConfigurationError("max_score must be >= 1 (a score of 1 means identical direction)")
        if self.k_per_activity < 0:
            raise ConfigurationError("k_per_activity must be >= 0")
        if self.min_intensity < 0:
            raise ConfigurationError("min_intensity must be >= 0")
        if self.top_k < 0:
            raise ConfigurationError("top_k must be >= 0")
        if self.rca_threshold <= 0:
            raise ConfigurationError("rca_threshold must be > 0")
        if self.rank_by not in RANK_MODES:
            raise ConfigurationError(f"rank_by must be one of {sorted(RANK_MODES)}")
        if self.mds_dimension < 1:
            raise ConfigurationError("mds.m must be >= 1")
        if self.mds_max_iters < 1:
            raise ConfigurationError("mds.max_iters must be >= 1")
        if self.mds_rel_tol <= 0:
            raise ConfigurationError("mds.rel_tol must be > 0")


# JSON key -> (attribute, type coercion)
_KEY_MAP = {
    "radius_km": ("radius_km", float),
    "max_score": ("max_score", float),
    "k_per_activity": ("k_per_activity", int),
    "min_intensity": ("min_intensity", float),
    "top_k": ("top_k", int),
    "rca_threshold": ("rca_threshold", float),
    "country": ("country", str),
    "territory": ("territory", str),
    "rank_by": ("rank_by", str),
    "mds.m": ("mds_dimension", int),
    "mds.max_iters": ("mds_max_iters", int),
    "mds.rel_tol": ("mds_rel_tol", float),
    "seed": ("seed", int),
    "geocoder_url": ("geocoder_url", str),
}

# keys where JSON null is a meaningful value rather than an omission
_NULLABLE = frozenset({"territory", "geocoder_url"})


def config_from_mapping(values: dict[str, Any]) -> EngineConfig:
    """Build an :class:`EngineConfig` from a flat key/value mapping."""
    kwargs: dict[str, Any] = {}
    for key, value in values.items():
        if key not in _KEY_MAP:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        attr, cast = _KEY_MAP[key]
        if value is None:
            if key not in _NULLABLE:
                raise ConfigurationError(f"configuration key {key!r} must not be null")
            kwargs[attr] = None
            continue
        try:
            kwargs[attr] = cast(value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"configuration key {key!r}: {exc}") from exc
    return EngineConfig(**kwargs)


def load_config(path: str | Path) -> EngineConfig:
    """Read a flat JSON configuration file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"configuration file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"configuration file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration root must be a JSON object")
    return config_from_mapping(raw)


def with_overrides(config: EngineConfig, **overrides: Any) -> EngineConfig:
    """Return a copy of ``config`` with the given attributes replaced."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **updates) if updates else config
