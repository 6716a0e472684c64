"""
Pytest configuration and fixtures for BGN tests
"""

import numpy as np
import pytest

from bgn.graph import Graph, Split, build_graph, make_split, synth_citation_graph
from bgn.rng import RngStream

FIXTURE_SEED = 7


@pytest.fixture
def rng():
    """Fresh seeded stream per test"""
    return RngStream(1234)


@pytest.fixture
def tiny_graph() -> Graph:
    """5-node path 0-1-2-3 plus isolated node 4, two classes, 3 features"""
    features = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.5, 0.5],
            [0.0, 0.0, 1.0],
        ]
    )
    edges = np.array([[0, 1], [1, 2], [2, 3]])
    return build_graph(5, edges, features, np.array([0, 0, 1, 1, 1]), node_ids=("a", "b", "c", "d", "e"))


@pytest.fixture
def small_graph() -> Graph:
    """12-node random graph with dense real features, used for gradient checks"""
    stream = RngStream(99)
    n = 12
    iu, ju = np.triu_indices(n, 1)
    keep = stream.uniform(iu.size) < 0.3
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    features = stream.normal((n, 5))
    labels = np.arange(n) % 3
    return build_graph(n, edges, features, labels, n_classes=3)


@pytest.fixture(scope="session")
def fixture_graph() -> Graph:
    """Synthetic citation fixture: 200 nodes, 4 classes, homophily 0.9"""
    return synth_citation_graph(200, 100, 4, 0.9, RngStream(FIXTURE_SEED))


@pytest.fixture(scope="session")
def fixture_split(fixture_graph) -> Split:
    """20 labeled nodes per class, 40 validation and 80 test nodes"""
    return make_split(fixture_graph, 20, 80, RngStream(FIXTURE_SEED).child(1), n_val=40)


def random_signs(stream: RngStream, shape) -> np.ndarray:
    return np.where(stream.uniform(shape) < 0.5, 1.0, -1.0)
