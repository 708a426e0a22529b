"""Shared fixtures: the desk dataset built once per session."""

from __future__ import annotations

from pathlib import Path

import pytest

from supplyatlas.config import load_config
from supplyatlas.pipeline import Pipeline

REPO_ROOT = Path(__file__).resolve().parent.parent
DESK_DIR = REPO_ROOT / "fixtures" / "desk"


@pytest.fixture(scope="session")
def desk_dir() -> Path:
    return DESK_DIR


@pytest.fixture(scope="session")
def desk_config():
    return load_config(DESK_DIR / "config.json")


@pytest.fixture(scope="session")
def desk_pipeline(desk_config, tmp_path_factory) -> Pipeline:
    """The desk dataset built into a session-scoped artifact directory."""
    artifacts_dir = tmp_path_factory.mktemp("desk-artifacts")
    pipeline = Pipeline(DESK_DIR, desk_config, artifacts_dir=artifacts_dir)
    pipeline.run("all")
    return pipeline


@pytest.fixture(scope="session")
def desk_artifacts(desk_pipeline):
    return desk_pipeline.load_engine_artifacts()
