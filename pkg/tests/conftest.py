import numpy as np
import pytest

from swapgt.graph import Graph, SbmSpec, generate_sbm


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_sbm():
    return generate_sbm(SbmSpec((15, 15), 0.3, 0.03, 6, 3.0), seed=11)


def random_graph(rng, n, p=0.2, d=4, c=2):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    X = rng.standard_normal((n, d))
    y = rng.integers(0, c, size=n)
    return Graph.from_edges(n, edges, X, y, c=c)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.REPORT, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
