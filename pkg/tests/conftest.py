from __future__ import annotations

import sys
from datetime import datetime, timezone

import pytest

from forewarn.grid import build_catalog, grid_spec

RUN_T0 = datetime(2026, 2, 3, 6, tzinfo=timezone.utc)


def pytest_terminal_summary(terminalreporter):
    # repeat the acceptance verdict lines outside the captured stream so a
    # plain `pytest -v` log still records them
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def catalog():
    return build_catalog()


@pytest.fixture(scope="session")
def spec_1deg():
    return grid_spec(1.0)


@pytest.fixture(scope="session")
def spec_coarse():
    # 10 x 18 nodes: big enough to exercise wrap and smoothing, tiny enough
    # for element-by-element reference implementations.
    return grid_spec(20.0)


@pytest.fixture()
def run_time():
    return RUN_T0
