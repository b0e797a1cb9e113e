import numpy as np
import pytest

from scancomplete.fixtures import make_fixture, sphere_mesh
from scancomplete.mesh import TexturedMesh, normalize_to_unit_cube


def make_quad_mesh(atlas=None):
    """Unit quad in the XY plane, two triangles, optional atlas."""
    vertices = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    uv = np.array([
        [[0, 0], [1, 0], [1, 1]],
        [[0, 0], [1, 1], [0, 1]],
    ], dtype=float)
    return TexturedMesh(vertices=vertices, triangles=triangles,
                        uv_coords=uv if atlas is not None else None, atlas=atlas)


def checker_atlas(n=4):
    atlas = np.zeros((n, n, 3), dtype=np.float32)
    idx = np.add.outer(np.arange(n), np.arange(n)) % 2
    atlas[idx == 0] = 1.0
    return atlas


@pytest.fixture(scope="session")
def quad_mesh():
    return make_quad_mesh(atlas=checker_atlas())


@pytest.fixture(scope="session")
def sphere_fixture():
    return make_fixture(0)


@pytest.fixture(scope="session")
def normalized_sphere(sphere_fixture):
    mesh, transform = normalize_to_unit_cube(sphere_fixture.mesh)
    return mesh, transform, sphere_fixture
