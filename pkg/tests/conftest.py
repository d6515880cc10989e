"""Shared fixtures and the acceptance-line reporter.

Acceptance tests append one ``PASS``/``FAIL`` line per criterion to
``ACCEPTANCE_LINES``; the lines are echoed in the terminal summary so they
survive output capturing.
"""
import numpy as np
import pytest

from sagfree import kinematics as kn
from sagfree.elastic import ExternalLoad, RestShape
from sagfree.scenarios import horizontal, vertical

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return kn.MaterialParams()


@pytest.fixture
def vertical_state():
    return kn.StrandState(vertical(20, 1.0))


@pytest.fixture
def horizontal_state():
    return kn.StrandState(horizontal(20, 1.0))


@pytest.fixture
def gravity():
    return ExternalLoad()


@pytest.fixture
def no_gravity():
    return ExternalLoad((0.0, 0.0, 0.0))


def naive(state):
    return RestShape.from_state(state)
