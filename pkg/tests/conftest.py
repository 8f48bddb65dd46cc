"""Shared fixtures: bundled data paths and cached full scenario runs."""

from __future__ import annotations

from pathlib import Path

import pytest

from mortsynth import load_scenario_spec, run_scenario

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "mortsynth" / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def germany_config() -> Path:
    return DATA_DIR / "configs" / "germany.toml"


@pytest.fixture(scope="session")
def italy_config() -> Path:
    return DATA_DIR / "configs" / "italy.toml"


@pytest.fixture(scope="session")
def switzerland_config() -> Path:
    return DATA_DIR / "configs" / "switzerland.toml"


@pytest.fixture(scope="session")
def germany_result(germany_config):
    return run_scenario(load_scenario_spec(germany_config))


@pytest.fixture(scope="session")
def italy_result(italy_config):
    return run_scenario(load_scenario_spec(italy_config))


@pytest.fixture(scope="session")
def switzerland_result(switzerland_config):
    return run_scenario(load_scenario_spec(switzerland_config))
