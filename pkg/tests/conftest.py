import numpy as np
import pytest

from sdie.graph import FidelityData, Graph
from sdie.oracle import DenseOperator, random_connected_graph


def two_node(weight=1.0, normalization="random_walk"):
    return Graph.from_dense([[0.0, weight], [weight, 0.0]], normalization)


def path3(normalization="symmetric"):
    W = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    return Graph.from_dense(W, normalization)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_problem(rng):
    g = random_connected_graph(8, rng)
    mu = np.zeros(8)
    mu[[0, 3, 5]] = [1.0, 2.0, 0.5]
    ft = np.zeros(8)
    ft[[0, 5]] = 1.0
    return DenseOperator(g, FidelityData(mu, ft))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES,
                           key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
