import numpy as np
import pytest

from carcopula.datasets import load_india_adjacency, load_india_rainfall
from carcopula.graph import load_adjacency
from carcopula.marginals import standardize_time


@pytest.fixture(scope="session")
def cycle4():
    return load_adjacency([(1, 2), (2, 3), (3, 4), (4, 1)], 4)


@pytest.fixture(scope="session")
def pair_graph():
    return load_adjacency([(1, 2)], 2)


@pytest.fixture(scope="session")
def ring10():
    return load_adjacency([(i, i + 1) for i in range(1, 10)] + [(10, 1)], 10)


@pytest.fixture(scope="session")
def india_graph():
    return load_india_adjacency()


@pytest.fixture(scope="session")
def india_panel():
    return load_india_rainfall()


@pytest.fixture(scope="session")
def ts64():
    return standardize_time(64)


def random_connected_graph(rng: np.random.Generator, n: int):
    """Random spanning tree plus extra edges; used by property tests."""
    perm = rng.permutation(n) + 1
    edges = []
    for k in range(1, n):
        j = int(rng.integers(0, k))
        edges.append((int(perm[j]), int(perm[k])))
    n_extra = int(rng.integers(0, max(1, n)))
    for _ in range(n_extra):
        i, j = rng.integers(1, n + 1, size=2)
        if i != j:
            edges.append((int(i), int(j)))
    return load_adjacency(edges, n)
