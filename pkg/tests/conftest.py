import shutil

import pytest

from distmarket import bundled_scenario
from distmarket.market_core import load_scenario


@pytest.fixture(scope="session")
def six_bus_path():
    return bundled_scenario("six_bus")


@pytest.fixture(scope="session")
def six_bus(six_bus_path):
    return load_scenario(six_bus_path)


@pytest.fixture
def scenario_copy(tmp_path, six_bus_path):
    """A writable copy of the bundled scenario directory."""
    dst = tmp_path / "scenario"
    shutil.copytree(six_bus_path, dst)
    return dst


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
