import os

import pytest

# (criterion, status, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture
def report_line():
    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-minute convergence runs")
    config.addinivalue_line("markers", "full: full-resolution runs, enabled with ROMLIFT_FULL=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ROMLIFT_FULL") == "1":
        return
    skip = pytest.mark.skip(reason="full-resolution run; set ROMLIFT_FULL=1 (tens of minutes)")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_grid():
    from romlift.core import SpatialGrid

    return SpatialGrid(40.0, 800)
