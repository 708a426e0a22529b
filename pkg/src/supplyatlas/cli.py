"""Command line entry point.

Usage:
    supplyatlas [-C DIR] [--config FILE] build {all|<stage>} [--force]
    supplyatlas [-C DIR] recommend FACILITY_ID [--radius-km X] [--max-score Y]
    supplyatlas [-C DIR] export-graph [--territory T] [--kind K] [--format F] [-o FILE]
    supplyatlas [-C DIR] serve [--host H] [--port P]

Exit codes: 0 success, 2 bad input (arguments, data files, unknown ids),
1 internal failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EngineConfig, load_config, with_overrides
from .errors import NumericalError, SupplyAtlasError
from .pipeline import STAGE_NAMES, Pipeline
from .recommender import (
    filter_graph,
    graph_to_edge_csv,
    load_graph,
    recommend,
    serialize_graph,
    serialize_recommendation,
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supplyatlas",
        description="Local supplier recommendations from trade and input-output data.",
    )
    parser.add_argument(
        "-C", "--data-dir", default=".", help="directory holding the raw input files"
    )
    parser.add_argument(
        "--config", default=None, help="flat JSON config (default: <data-dir>/config.json)"
    )
    parser.add_argument(
        "--artifacts-dir",
        default=None,
        help="artifact directory (default: <data-dir>/artifacts)",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the embedding seed")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    commands = parser.add_subparsers(dest="command", required=True)

    build = commands.add_parser("build", help="run pipeline stages")
    build.add_argument("target", help=f"'all' or one of: {', '.join(STAGE_NAMES)}")
    build.add_argument("--force", action="store_true", help="ignore the artifact cache")

    rec = commands.add_parser("recommend", help="print recommendations for one facility")
    rec.add_argument("facility_id")
    rec.add_argument("--radius-km", type=float, default=None)
    rec.add_argument("--max-score", type=float, default=None)

    export = commands.add_parser("export-graph", help="print the synergy graph")
    export.add_argument("--territory", default=None)
    export.add_argument("--kind", default=None, choices=["direct", "alternative"])
    export.add_argument("--format", default="json", choices=["json", "csv"])
    export.add_argument("-o", "--output", default=None, help="write to a file instead of stdout")

    serve = commands.add_parser("serve", help="start the read-only HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser


def _load_config(args: argparse.Namespace) -> EngineConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        default_path = Path(args.data_dir) / "config.json"
        config = load_config(default_path) if default_path.exists() else EngineConfig()
    return with_overrides(config, seed=args.seed)


def _dispatch(args: argparse.Namespace) -> int:
    config = _load_config(args)
    pipeline = Pipeline(args.data_dir, config, args.artifacts_dir)

    if args.command == "build":
        executed = pipeline.run(args.target, force=args.force)
        for name in executed:
            logger.info("built stage %s", name)
        return 0

    if args.command == "recommend":
        config = with_overrides(config, radius_km=args.radius_km, max_score=args.max_score)
        artifacts = pipeline.load_engine_artifacts()
        result = recommend(args.facility_id, artifacts, config)
        sys.stdout.buffer.write(serialize_recommendation(result))
        sys.stdout.buffer.flush()
        return 0

    if args.command == "export-graph":
        graph = load_graph(pipeline.store.verify("synergy_graph.json"))
        graph = filter_graph(graph, territory=args.territory, kind=args.kind)
        if args.format == "csv":
            if args.output:
                graph_to_edge_csv(graph, args.output)
            else:
                graph_to_edge_csv(graph, sys.stdout)
        else:
            data = serialize_graph(graph)
            if args.output:
                Path(args.output).write_bytes(data)
            else:
                sys.stdout.buffer.write(data)
                sys.stdout.buffer.flush()
        return 0

    if args.command == "serve":
        import uvicorn

        from .api import create_app

        app = create_app(pipeline.load_engine_artifacts(), config, pipeline.store)
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,  # rebind handlers when main() runs twice in one process
    )
    try:
        return _dispatch(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SupplyAtlasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
