"""
Shared fixtures: the default scenario, a low-power scenario with pinned
aging correlation, and seeded generators.
"""

from pathlib import Path

import numpy as np
import pytest

from risage.scenario import ScenarioConfig, load_scenario, resolve_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"

DENSITY_DOC = """
[radio]
tx_power_bs_dbm = 0
tx_power_uav_dbm = 0

[aging]
correlation_su = 0.5
correlation_ur = 0.5

[ris]
elements = 16

[bs]
antennas = 4
"""


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture
def default_config():
    return ScenarioConfig()


@pytest.fixture
def default_resolved(default_config):
    return resolve_scenario(default_config)


@pytest.fixture
def density_config():
    return load_scenario(DENSITY_DOC)


@pytest.fixture
def density_resolved(density_config):
    return resolve_scenario(density_config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Runtime settings must not leak in from the caller's shell"""
    for name in ("SEED", "WORKERS", "LOG_LEVEL", "MLFLOW_URI", "MLFLOW_EXPERIMENT"):
        monkeypatch.delenv(f"RISAGE_{name}", raising=False)
