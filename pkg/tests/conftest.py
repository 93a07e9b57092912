import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tdras.grid import build_grid  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(-25.0, 25.0, 256)


@pytest.fixture(scope="session")
def tiny_grid():
    return build_grid(-12.0, 12.0, 64)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
