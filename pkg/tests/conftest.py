import numpy as np
import pytest

from epivax.control import ControlProblem, solve_direct, solve_indirect
from epivax.models import preset_scenario


@pytest.fixture
def epidemic():
    return preset_scenario("epidemic")


@pytest.fixture
def endemic():
    return preset_scenario("endemic")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# control solves take seconds; share them across the session

_solves = {}


def _cached(key, fn):
    if key not in _solves:
        _solves[key] = fn()
    return _solves[key]


@pytest.fixture(scope="session")
def solved():
    """``solved(name, method)`` -> (problem, report) for the default control setup of a preset."""

    def get(name, method="indirect"):
        problem = ControlProblem.from_preset(name)
        if method == "indirect":
            return problem, _cached((name, method), lambda: solve_indirect(problem))
        return problem, _cached((name, method), lambda: solve_direct(problem, 10))

    return get


# acceptance verdicts, one line per criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
