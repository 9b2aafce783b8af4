import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from alsgt.pipeline import run_pipeline  # noqa: E402
from alsgt.sim import Scenario, simulate  # noqa: E402

_RUNS = {}


def timed_run(name, **overrides):
    key = (name, tuple(sorted(overrides.items())))
    if key not in _RUNS:
        t0 = time.perf_counter()
        res = run_pipeline(Scenario.load(name, **overrides))
        _RUNS[key] = (res, time.perf_counter() - t0)
    return _RUNS[key]


@pytest.fixture(scope="session")
def nominal_run():
    return timed_run("nominal_city")


@pytest.fixture(scope="session")
def denied_run():
    return timed_run("gnss_denied")


@pytest.fixture(scope="session")
def small_run():
    return timed_run("small_block")[0]


@pytest.fixture(scope="session")
def small_data():
    return simulate(Scenario.load("small_block"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
