import numpy as np
import pytest

from slidingbasis.domains import ElementAdjacency, box_tet_mesh
from slidingbasis.topopt import FemModel


def cantilever_model(
    nx, ny, nz, length=2.0, width=0.2, height=0.2, nu=0.3, total_load=-1000.0
):
    """Slab clamped on the x=0 face, shear load spread over the x=L face."""
    mesh = box_tet_mesh(nx, ny, nz, length, width, height)
    x = mesh.vertices[:, 0]
    root = np.nonzero(np.abs(x) < 1e-12)[0]
    tip = np.nonzero(np.abs(x - length) < 1e-12)[0]
    fixed_dofs = (3 * root[:, None] + np.arange(3)).ravel()
    loads = np.zeros(3 * len(mesh.vertices))
    loads[3 * tip + 2] = total_load / len(tip)
    return mesh, FemModel(mesh=mesh, nu=nu, fixed_dofs=fixed_dofs, loads=loads), tip


def path_adjacency(n: int) -> ElementAdjacency:
    """Dual graph of n elements in a row, each sharing a face with the next."""
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = []
    for i in range(n):
        nb = [j for j in (i - 1, i + 1) if 0 <= j < n]
        indices.extend(nb)
        indptr[i + 1] = indptr[i] + len(nb)
    return ElementAdjacency(indptr=indptr, indices=np.asarray(indices, dtype=np.int64))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
