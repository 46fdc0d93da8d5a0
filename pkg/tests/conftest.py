from pathlib import Path

import numpy as np
import pytest

from src.config.config import apply_overrides, load_run_config
from src.utils import logger as logger_module

ROOT = Path(__file__).resolve().parent.parent
SMALL_CONFIG = ROOT / "config" / "small_config.json"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the synthetic acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running synthetic acceptance test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    # keep handlers out of the root logger; pytest captures records anyway
    monkeypatch.setattr(logger_module, "_configured", True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config(tmp_path):
    config = load_run_config(str(SMALL_CONFIG))
    return apply_overrides(config, {"paths.cache_dir": str(tmp_path / "cache")})


@pytest.fixture
def small_config_path():
    return str(SMALL_CONFIG)
