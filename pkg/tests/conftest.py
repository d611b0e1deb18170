import numpy as np
import pytest

from nirom.mesh import build_connectivity, compute_geometry, make_raw_mesh
from nirom.meshgen import crisscross_mesh


def geometry(nodes, cells):
    return compute_geometry(build_connectivity(make_raw_mesh(nodes, cells)))


@pytest.fixture(scope="session")
def unit_square_pair():
    return geometry([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2), (0, 2, 3)])


@pytest.fixture(scope="session")
def skew_pair():
    return geometry([(0, 0), (1, 0), (0.2, 1), (1.3, 1.1)], [(0, 1, 2), (1, 3, 2)])


@pytest.fixture(scope="session")
def crisscross8():
    return compute_geometry(build_connectivity(crisscross_mesh(8)))


@pytest.fixture(scope="session")
def canonical_geom():
    from nirom.mesh import geometry_from_file
    from nirom.pipeline import default_mesh_path

    return geometry_from_file(default_mesh_path())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
