"""Batch pipeline: staged builds with content-addressed caching.

Each stage reads raw input files and/or artifacts of earlier stages and
writes its outputs into an artifact directory.  A manifest records, per
artifact, the sha256 of its content, the parameters it was built with
and the hashes of everything it was built from; a stage is skipped when
nothing it depends on changed.  A lock file keeps concurrent builds off
the same artifact directory.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

from . import complexity, embedding, facilities, ioanalysis, nomenclature, recommender
from .config import EngineConfig
from .errors import ArtifactCorruptionError, ConfigurationError, PipelineError

logger = logging.getLogger(__name__)


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactStore:
    """Artifact directory with a manifest of content hashes."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        if self.manifest_path.exists():
            self.manifest: dict = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        else:
            self.manifest = {}

    def _save_manifest(self) -> None:
        text = json.dumps(self.manifest, indent=2, sort_keys=True) + "\n"
        self.manifest_path.write_text(text, encoding="utf-8")

    def path(self, name: str) -> Path:
        return self.root / name

    def has(self, name: str) -> bool:
        return name in self.manifest and self.path(name).exists()

    def verify(self, name: str) -> Path:
        """Path of an artifact after checking it against its recorded hash."""
        if name not in self.manifest:
            raise PipelineError(f"artifact {name!r} has not been built")
        path = self.path(name)
        if not path.exists():
            raise PipelineError(f"artifact {name!r} is recorded but its file is gone")
        actual = sha256_file(path)
        if actual != self.manifest[name]["sha256"]:
            raise ArtifactCorruptionError(
                f"artifact {name!r} does not match its manifest hash; rebuild it"
            )
        return path

    def record(self, name: str, params: dict, inputs: dict) -> None:
        self.manifest[name] = {
            "sha256": sha256_file(self.path(name)),
            "params": params,
            "inputs": inputs,
        }
        self._save_manifest()

    def fresh(self, name: str, params: dict, inputs: dict) -> bool:
        entry = self.manifest.get(name)
        if entry is None or not self.path(name).exists():
            return False
        if entry.get("params") != params or entry.get("inputs") != inputs:
            return False
        return sha256_file(self.path(name)) == entry["sha256"]

    @contextmanager
    def lock(self):
        path = self.root / ".lock"
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineError(
                f"another build holds the lock at {path}; remove it if that build died"
            )
        try:
            os.write(fd, f"{os.getpid()}\n".encode())
            yield
        finally:
            os.close(fd)
            path.unlink(missing_ok=True)


@dataclass(frozen=True)
class StageSpec:
    name: str
    inputs: tuple[str, ...]  # raw files under the data directory
    upstream: tuple[str, ...]  # artifacts produced by earlier stages
    outputs: tuple[str, ...]
    params: Callable[[EngineConfig], dict]


STAGES: tuple[StageSpec, ...] = (
    StageSpec(
        "ingest",
        inputs=("facilities.csv",),
        upstream=(),
        outputs=("facilities_geocoded.csv", "ingest_report.csv"),
        params=lambda c: {"geocoder_url": c.geocoder_url},
    ),
    StageSpec(
        "proximity",
        inputs=("exports.csv",),
        upstream=(),
        outputs=("product_proximity.csv",),
        params=lambda c: {"rca_threshold": c.rca_threshold},
    ),
    StageSpec(
        "weights",
        inputs=(
            "bea_to_naics.csv",
            "naics_to_nace.csv",
            "nace_to_cpa.csv",
            "cpa_to_hs.csv",
            "exports.csv",
        ),
        upstream=(),
        outputs=(
            "bea_to_nace.csv",
            "activity_products.csv",
            "product_weights.csv",
            "unmapped_report.csv",
        ),
        params=lambda c: {"country": c.country},
    ),
    StageSpec(
        "embed",
        inputs=(),
        upstream=("product_proximity.csv",),
        outputs=("embedding.csv", "embedding_meta.json"),
        params=lambda c: {
            "m": c.mds_dimension,
            "max_iters": c.mds_max_iters,
            "rel_tol": c.mds_rel_tol,
            "seed": c.seed,
        },
    ),
    StageSpec(
        "activity",
        inputs=(),
        upstream=("embedding.csv", "product_weights.csv"),
        outputs=("activity_vectors.csv", "activity_proximity.csv", "activity_report.csv"),
        params=lambda c: {"country": c.country},
    ),
    StageSpec(
        "io-project",
        inputs=("io_flows.csv", "io_industries.csv"),
        upstream=("bea_to_nace.csv",),
        outputs=("supplier_relations.json", "io_report.csv"),
        params=lambda c: {
            "min_intensity": c.min_intensity,
            "top_k": c.top_k,
            "rank_by": c.rank_by,
        },
    ),
    StageSpec(
        "graph",
        inputs=(),
        upstream=("facilities_geocoded.csv", "supplier_relations.json", "activity_vectors.csv"),
        outputs=("synergy_graph.json", "synergy_edges.csv"),
        params=lambda c: {
            "radius_km": c.radius_km,
            "max_score": c.max_score,
            "k_per_activity": c.k_per_activity,
            "territory": c.territory,
        },
    ),
)

STAGE_NAMES = tuple(s.name for s in STAGES)
_STAGE_BY_NAME = {s.name: s for s in STAGES}


def _write_report(path: Path, rows: list[tuple[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "reason"])
        for subject, reason in rows:
            writer.writerow([subject, reason])


class Pipeline:
    """Runs the stages against one data directory and one artifact store."""

    def __init__(
        self,
        data_dir: Union[str, Path],
        config: EngineConfig,
        artifacts_dir: Optional[Union[str, Path]] = None,
    ):
        self.data_dir = Path(data_dir)
        self.config = config
        self.store = ArtifactStore(artifacts_dir or self.data_dir / "artifacts")

    # -- stage bodies ------------------------------------------------------

    def _run_ingest(self, spec: StageSpec) -> None:
        registry, issues = facilities.ingest_facilities(self.data_dir / "facilities.csv")
        report = [(i.subject, i.reason) for i in issues]
        if self.config.geocoder_url:
            client = facilities.AddressApiClient(self.config.geocoder_url)
            cache = facilities.DiskGeocodeCache(self.store.root / "geocode_cache.csv")
            registry, geocode_issues = facilities.geocode_registry(registry, client, cache)
            report.extend((i.subject, i.reason) for i in geocode_issues)
        facilities.registry_to_csv(registry, self.store.path("facilities_geocoded.csv"))
        _write_report(self.store.path("ingest_report.csv"), report)

    def _run_proximity(self, spec: StageSpec) -> None:
        exports = complexity.load_exports_csv(self.data_dir / "exports.csv")
        rca = complexity.compute_rca(exports)
        flags = complexity.binarize(rca, self.config.rca_threshold)
        proximity = complexity.product_proximity(flags)
        complexity.proximity_to_csv(proximity, self.store.path("product_proximity.csv"))

    def _run_weights(self, spec: StageSpec) -> None:
        bea_to_naics = nomenclature.parse_correspondence(
            self.data_dir / "bea_to_naics.csv", "BEA", "NAICS"
        )
        naics_to_nace = nomenclature.parse_correspondence(
            self.data_dir / "naics_to_nace.csv", "NAICS", "NACE2"
        )
        bea_to_nace, unmapped = nomenclature.build_weighted_chain(bea_to_naics, naics_to_nace)

        nace_to_cpa = nomenclature.weight_correspondence(
            nomenclature.parse_correspondence(self.data_dir / "nace_to_cpa.csv", "NACE2", "CPA21")
        )
        cpa_to_hs = nomenclature.weight_correspondence(
            nomenclature.parse_correspondence(self.data_dir / "cpa_to_hs.csv", "CPA21", "HS2017")
        )
        activity_products, unmapped2 = nomenclature.compose_mappings(nace_to_cpa, cpa_to_hs)

        exports = complexity.load_exports_csv(self.data_dir / "exports.csv")
        weights, warnings = nomenclature.product_weights(
            exports, activity_products, self.config.country
        )

        nomenclature.mapping_to_csv(bea_to_nace, self.store.path("bea_to_nace.csv"))
        nomenclature.mapping_to_csv(activity_products, self.store.path("activity_products.csv"))
        nomenclature.weights_to_csv(weights, self.store.path("product_weights.csv"))
        rows = [(e.source, e.reason) for e in (*unmapped, *unmapped2, *warnings)]
        _write_report(self.store.path("unmapped_report.csv"), rows)

    def _run_embed(self, spec: StageSpec) -> None:
        proximity = complexity.proximity_from_csv(self.store.verify("product_proximity.csv"))
        delta = embedding.to_dissimilarity(proximity)
        options = embedding.MdsOptions(
            dimension=self.config.mds_dimension,
            max_iters=self.config.mds_max_iters,
            rel_tol=self.config.mds_rel_tol,
            seed=self.config.seed,
        )
        result = embedding.mds_embed(delta, options)
        embedding.embedding_to_csv(result.embedding, self.store.path("embedding.csv"))
        meta = {
            "dimension": result.embedding.dimension,
            "seed": self.config.seed,
            "iterations": result.iterations,
            "stress": round(result.stress, 12),
        }
        self.store.path("embedding_meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _run_activity(self, spec: StageSpec) -> None:
        emb = embedding.embedding_from_csv(self.store.verify("embedding.csv"))
        weights = nomenclature.weights_from_csv(
            self.store.verify("product_weights.csv"), self.config.country
        )
        vectors, skipped = embedding.activity_vectors(emb, weights)
        embedding.activity_vectors_to_csv(vectors, self.store.path("activity_vectors.csv"))
        embedding.proximity_scores_to_csv(vectors, self.store.path("activity_proximity.csv"))
        _write_report(
            self.store.path("activity_report.csv"), [(e.source, e.reason) for e in skipped]
        )

    def _run_io_project(self, spec: StageSpec) -> None:
        table, issues = ioanalysis.load_io_table(
            self.data_dir / "io_flows.csv", self.data_dir / "io_industries.csv"
        )
        mapping = nomenclature.mapping_from_csv(
            self.store.verify("bea_to_nace.csv"), "BEA", "NACE2"
        )
        if self.config.rank_by == "flow":
            relations, unmapped = ioanalysis.flow_relations(
                table, mapping, self.config.min_intensity, self.config.top_k
            )
        else:
            coefficients = ioanalysis.technical_coefficients(table)
            projected, unmapped = ioanalysis.project_to_nace(coefficients, mapping)
            relations = ioanalysis.supplier_relations(
                projected, self.config.min_intensity, self.config.top_k
            )
        ioanalysis.relations_to_json(relations, self.store.path("supplier_relations.json"))
        rows = [(i.subject, i.reason) for i in issues]
        rows.extend((e.source, e.reason) for e in unmapped)
        _write_report(self.store.path("io_report.csv"), rows)

    def _run_graph(self, spec: StageSpec) -> None:
        artifacts = self.load_engine_artifacts()
        graph = recommender.build_synergy_graph(artifacts, self.config)
        self.store.path("synergy_graph.json").write_bytes(recommender.serialize_graph(graph))
        recommender.graph_to_edge_csv(graph, self.store.path("synergy_edges.csv"))

    _RUNNERS = {
        "ingest": _run_ingest,
        "proximity": _run_proximity,
        "weights": _run_weights,
        "embed": _run_embed,
        "activity": _run_activity,
        "io-project": _run_io_project,
        "graph": _run_graph,
    }

    # -- orchestration -----------------------------------------------------

    def _stage_inputs(self, spec: StageSpec) -> dict:
        inputs = {}
        for name in spec.inputs:
            path = self.data_dir / name
            if not path.exists():
                raise PipelineError(f"stage {spec.name!r} needs input file {name!r}")
            inputs[name] = sha256_file(path)
        for name in spec.upstream:
            self.store.verify(name)
            inputs[name] = self.store.manifest[name]["sha256"]
        return inputs

    def run_stage(self, name: str, force: bool = False) -> bool:
        """Run one stage; returns False on a cache hit."""
        spec = _STAGE_BY_NAME.get(name)
        if spec is None:
            raise ConfigurationError(
                f"unknown stage {name!r}; stages are: {', '.join(STAGE_NAMES)}"
            )
        params = spec.params(self.config)
        inputs = self._stage_inputs(spec)
        if not force and all(self.store.fresh(out, params, inputs) for out in spec.outputs):
            logger.info("stage %s: cache hit", name)
            return False
        logger.info("stage %s: running", name)
        self._RUNNERS[name](self, spec)
        for out in spec.outputs:
            if not self.store.path(out).exists():
                raise PipelineError(f"stage {name!r} did not produce {out!r}")
            self.store.record(out, params, inputs)
        return True

    def run(self, target: str = "all", force: bool = False) -> list[str]:
        """Run one stage or every stage in order; returns the stages executed."""
        names = STAGE_NAMES if target == "all" else (target,)
        if target != "all" and target not in _STAGE_BY_NAME:
            raise ConfigurationError(
                f"unknown stage {target!r}; stages are: {', '.join(STAGE_NAMES)} or 'all'"
            )
        executed = []
        with self.store.lock():
            for name in names:
                if self.run_stage(name, force=force):
                    executed.append(name)
        return executed

    def load_engine_artifacts(self) -> recommender.EngineArtifacts:
        """Load the verified artifacts the recommender works from."""
        registry = facilities.registry_from_csv(self.store.verify("facilities_geocoded.csv"))
        relations = ioanalysis.relations_from_json(self.store.verify("supplier_relations.json"))
        vectors = embedding.activity_vectors_from_csv(self.store.verify("activity_vectors.csv"))
        return recommender.EngineArtifacts(
            registry=registry,
            index=facilities.SpatialIndex.build(registry),
            relations=relations,
            vectors=vectors,
        )
