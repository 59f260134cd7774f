import numpy as np
import pytest

from qudrc.experiment import generate_quadratics
from qudrc.graph import random_strongly_connected_digraph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_problem():
    graph = random_strongly_connected_digraph(6, 0.3, seed=3)
    costs = generate_quadratics(4, 6, seed=4)
    return graph, costs


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
