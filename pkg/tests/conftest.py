import numpy as np
import pytest

from surfparc.ai.gradcheck import tiny_run_config, tiny_subject
from surfparc.ai.tensor import set_check_finite
from surfparc.geometry.mesh import SurfaceGraph, graph_from_adjacency
from surfparc.geometry.synthetic import make_icosphere
from scipy import sparse


@pytest.fixture(autouse=True)
def finite_checks():
    """Run every test with the per-op NaN/Inf checks of the testing config."""
    set_check_finite(True)
    yield
    set_check_finite(False)


@pytest.fixture(scope='session')
def icosahedron():
    return make_icosphere(0)


@pytest.fixture(scope='session')
def sphere2():
    return make_icosphere(2)


@pytest.fixture(scope='session')
def sphere3():
    return make_icosphere(3)


@pytest.fixture
def tiny_config():
    return tiny_run_config()


@pytest.fixture(scope='session')
def small_subject():
    return tiny_subject(seed=3)


def graph_from_edges(num_vertices, edges, positions=None) -> SurfaceGraph:
    """Symmetric SurfaceGraph from an undirected edge list."""
    if positions is None:
        positions = np.zeros((num_vertices, 3))
        positions[:, 0] = np.arange(num_vertices)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adjacency = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(num_vertices, num_vertices))
    return graph_from_adjacency(adjacency, np.asarray(positions, dtype=np.float64))


def grid_edges(side):
    """4-neighbour grid, vertex (r, c) -> r * side + c."""
    edges = []
    for r in range(side):
        for c in range(side):
            v = r * side + c
            if c + 1 < side:
                edges.append((v, v + 1))
            if r + 1 < side:
                edges.append((v, v + side))
    return edges
