import os

import pytest

from mimonetcal.cache import CapacityCache
from mimonetcal.config import ScenarioConfig
from mimonetcal.scenario import build_scenario


@pytest.fixture(scope="session")
def capacity_cache(tmp_path_factory):
    """Shared capacity cache; set MIMONETCAL_TEST_CACHE to persist it across runs."""
    path = os.environ.get("MIMONETCAL_TEST_CACHE") or tmp_path_factory.mktemp("cache") / "capacities.jsonl"
    return CapacityCache(path)


@pytest.fixture(scope="session")
def scenario(capacity_cache):
    """Build (and memoize) chains for ScenarioConfig overrides."""
    built = {}

    def make(**overrides):
        key = tuple(sorted(overrides.items()))
        if key not in built:
            built[key] = build_scenario(ScenarioConfig(**overrides), capacity_cache)[0]
        return built[key]

    return make


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion and fail the test on FAIL."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
