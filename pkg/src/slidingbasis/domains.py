"""Discrete design domains and their face-sharing element adjacency.

Two domain kinds are supported: a structured quad grid covering the
axisymmetric (r, z) cross-section of a cylindrical chamber, and an
unstructured tetrahedral mesh for 3D structural problems.  Both expose the
same dual-graph view: elements are vertices, and two elements are adjacent
when they share a face (an edge in 2D, a triangle in 3D).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateElementError, InvalidDomainError, NonManifoldError


@dataclass(frozen=True)
class QuadGrid:
    """Structured grid of n_r x n_z rectangular cells in the (r, z) plane.

    Cell (i, j) has flat index ``j * n_r + i``; i runs radially, j axially.
    """

    n_r: int
    n_z: int
    dr: float
    dz: float
    r0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        if self.n_r < 2 or self.n_z < 2:
            raise InvalidDomainError(
                f"grid needs at least 2 cells per direction, got {self.n_r}x{self.n_z}"
            )
        if self.dr <= 0 or self.dz <= 0:
            raise InvalidDomainError(f"cell spacings must be positive, got dr={self.dr}, dz={self.dz}")

    @property
    def n_e(self) -> int:
        return self.n_r * self.n_z

    @property
    def r_outer(self) -> float:
        return self.r0 + self.n_r * self.dr

    @property
    def z_extent(self) -> float:
        return self.n_z * self.dz

    def flat_index(self, i, j):
        return np.asarray(j) * self.n_r + np.asarray(i)

    def cell_radii(self) -> np.ndarray:
        """Radial coordinate of every cell center, shape (n_r,)."""
        return self.r0 + (np.arange(self.n_r) + 0.5) * self.dr

    def cell_axials(self) -> np.ndarray:
        """Axial coordinate of every cell center, shape (n_z,)."""
        return self.z0 + (np.arange(self.n_z) + 0.5) * self.dz

    def as_array(self, flat_field: np.ndarray) -> np.ndarray:
        """Reshape a flat per-cell field to (n_r, n_z) with [i, j] indexing."""
        flat_field = np.asarray(flat_field)
        if flat_field.shape != (self.n_e,):
            raise InvalidDomainError(f"field has {flat_field.shape}, expected ({self.n_e},)")
        return flat_field.reshape(self.n_z, self.n_r).T


def build_quad_grid(n_r: int, n_z: int, r_in: float, r_out: float, length: float) -> QuadGrid:
    """Build the cross-section grid for a chamber of outer radius r_out and length L.

    The grid covers the full rectangle [0, r_out] x [0, L]; the propellant
    annulus [r_in, r_out] is always contained in it, and cells inside the
    bore radius r_in take part in the design field until they are masked
    from the final report.
    """
    if n_r < 2 or n_z < 2:
        raise InvalidDomainError("n_r and n_z must both be >= 2")
    if not (0 <= r_in < r_out):
        raise InvalidDomainError(f"need 0 <= r_in < r_out, got r_in={r_in}, r_out={r_out}")
    if length <= 0:
        raise InvalidDomainError(f"chamber length must be positive, got {length}")
    return QuadGrid(n_r=n_r, n_z=n_z, dr=r_out / n_r, dz=length / n_z)


@dataclass
class TetMesh:
    """Unstructured tetrahedral mesh: vertex coordinates and 4-tuples of indices."""

    vertices: np.ndarray
    tets: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.tets = np.asarray(self.tets, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise InvalidDomainError("vertices must be an (n, 3) array")
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise InvalidDomainError("tets must be an (m, 4) array")
        if self.tets.min(initial=0) < 0 or self.tets.max(initial=-1) >= len(self.vertices):
            raise InvalidDomainError("tet vertex index out of range")
        self._orient()

    def _orient(self):
        """Flip tets in place so every signed volume is positive."""
        vol = _signed_tet_volumes(self.vertices, self.tets)
        bad = np.abs(vol) < 1e-300
        if np.any(bad):
            raise DegenerateElementError(f"{int(bad.sum())} tets have zero volume")
        flip = vol < 0
        self.tets[flip] = self.tets[flip][:, [0, 1, 3, 2]]

    @property
    def n_e(self) -> int:
        return len(self.tets)


def _signed_tet_volumes(vertices, tets):
    a = vertices[tets[:, 0]]
    e1 = vertices[tets[:, 1]] - a
    e2 = vertices[tets[:, 2]] - a
    e3 = vertices[tets[:, 3]] - a
    return np.einsum("ij,ij->i", np.cross(e1, e2), e3) / 6.0


@dataclass
class ElementAdjacency:
    """Compressed neighbor lists of the element dual graph (CSR layout)."""

    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_e(self) -> int:
        return len(self.indptr) - 1

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, e: int) -> np.ndarray:
        return self.indices[self.indptr[e] : self.indptr[e + 1]]


def _adjacency_from_pairs(n_e: int, pairs: np.ndarray) -> ElementAdjacency:
    """Build symmetric CSR neighbor lists from an (m, 2) array of element pairs."""
    if len(pairs) == 0:
        return ElementAdjacency(indptr=np.zeros(n_e + 1, dtype=np.int64), indices=np.empty(0, dtype=np.int64))
    both = np.concatenate([pairs, pairs[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=n_e)
    indptr = np.zeros(n_e + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return ElementAdjacency(indptr=indptr, indices=both[:, 1].copy())


def face_adjacency(domain) -> ElementAdjacency:
    """Face-sharing adjacency of a QuadGrid or TetMesh (no self-loops)."""
    if isinstance(domain, QuadGrid):
        return _quad_adjacency(domain)
    if isinstance(domain, TetMesh):
        return _tet_adjacency(domain)
    raise InvalidDomainError(f"unsupported domain type {type(domain).__name__}")


def _quad_adjacency(grid: QuadGrid) -> ElementAdjacency:
    i, j = np.meshgrid(np.arange(grid.n_r), np.arange(grid.n_z), indexing="ij")
    flat = grid.flat_index(i, j)
    radial = np.stack([flat[:-1, :].ravel(), flat[1:, :].ravel()], axis=1)
    axial = np.stack([flat[:, :-1].ravel(), flat[:, 1:].ravel()], axis=1)
    return _adjacency_from_pairs(grid.n_e, np.concatenate([radial, axial]))


_TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


def _tet_adjacency(mesh: TetMesh) -> ElementAdjacency:
    faces = np.sort(mesh.tets[:, _TET_FACES].reshape(-1, 3), axis=1)
    owner = np.repeat(np.arange(mesh.n_e), 4)
    _, inverse, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    if counts.max(initial=0) > 2:
        raise NonManifoldError("a triangular face is shared by more than two tets")
    shared = counts[inverse] == 2
    order = np.argsort(inverse[shared], kind="stable")
    paired_owners = owner[shared][order].reshape(-1, 2)
    return _adjacency_from_pairs(mesh.n_e, paired_owners)


def element_centroids(domain) -> np.ndarray:
    """Centroid of every element: (n_e, 2) for grids, (n_e, 3) for tet meshes."""
    if isinstance(domain, QuadGrid):
        r = domain.cell_radii()
        z = domain.cell_axials()
        rr, zz = np.meshgrid(r, z, indexing="ij")
        out = np.empty((domain.n_e, 2))
        flat = domain.flat_index(*np.meshgrid(np.arange(domain.n_r), np.arange(domain.n_z), indexing="ij"))
        out[flat.ravel()] = np.stack([rr.ravel(), zz.ravel()], axis=1)
        return out
    if isinstance(domain, TetMesh):
        return domain.vertices[domain.tets].mean(axis=1)
    raise InvalidDomainError(f"unsupported domain type {type(domain).__name__}")


def element_measures(domain) -> np.ndarray:
    """Cell areas (QuadGrid) or tet volumes (TetMesh)."""
    if isinstance(domain, QuadGrid):
        return np.full(domain.n_e, domain.dr * domain.dz)
    if isinstance(domain, TetMesh):
        vol = _signed_tet_volumes(domain.vertices, domain.tets)
        if np.any(vol <= 0):
            raise DegenerateElementError("tet with non-positive volume")
        return vol
    raise InvalidDomainError(f"unsupported domain type {type(domain).__name__}")


def n_components(adj: ElementAdjacency) -> int:
    """Number of connected components of the dual graph (BFS)."""
    seen = np.zeros(adj.n_e, dtype=bool)
    count = 0
    for start in range(adj.n_e):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            e = stack.pop()
            for nb in adj.neighbors(e):
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
    return count


def load_tet_mesh(node_path, ele_path) -> TetMesh:
    """Read a mesh from ASCII node ("id x y z") and element ("id v0 v1 v2 v3") files.

    Ids are 0-based and must appear in order; blank lines and '#' comments are
    skipped.
    """
    verts = _read_table(node_path, 4)
    if not np.array_equal(verts[:, 0].astype(int), np.arange(len(verts))):
        raise InvalidDomainError(f"{node_path}: node ids must be 0..n-1 in order")
    eles = _read_table(ele_path, 5)
    if not np.array_equal(eles[:, 0].astype(int), np.arange(len(eles))):
        raise InvalidDomainError(f"{ele_path}: element ids must be 0..m-1 in order")
    return TetMesh(vertices=verts[:, 1:4], tets=eles[:, 1:5].astype(np.int64))


def save_tet_mesh(mesh: TetMesh, node_path, ele_path):
    with open(node_path, "w") as fh:
        for idx, (x, y, z) in enumerate(mesh.vertices):
            fh.write(f"{idx} {x:.17g} {y:.17g} {z:.17g}\n")
    with open(ele_path, "w") as fh:
        for idx, tet in enumerate(mesh.tets):
            fh.write(f"{idx} {tet[0]} {tet[1]} {tet[2]} {tet[3]}\n")


def _read_table(path, n_cols):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != n_cols:
                raise InvalidDomainError(f"{path}: expected {n_cols} columns, got {len(parts)}")
            rows.append([float(p) for p in parts])
    if not rows:
        raise InvalidDomainError(f"{path}: no rows")
    return np.asarray(rows)


# Kuhn subdivision: each hex cell splits into the six tets that share the
# main diagonal, so faces of neighboring cells triangulate consistently.
_KUHN_PATHS = [
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
]


def box_tet_mesh(nx: int, ny: int, nz: int, lx: float, ly: float, lz: float) -> TetMesh:
    """Conforming tetrahedralization of a box, 6 tets per hex cell.

    This is a fixture generator for demos and tests, not a general mesher.
    """
    if min(nx, ny, nz) < 1 or min(lx, ly, lz) <= 0:
        raise InvalidDomainError("box subdivisions must be >= 1 and extents positive")
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    zs = np.linspace(0.0, lz, nz + 1)
    xx, yy, zz = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                p0 = np.array([i, j, k])
                p1 = p0 + 1
                for path in _KUHN_PATHS:
                    a = p0.copy()
                    quad = [vid(*p0)]
                    for axis in path[:2]:
                        a[axis] += 1
                        quad.append(vid(*a))
                    quad.append(vid(*p1))
                    tets.append(quad)
    return TetMesh(vertices=verts, tets=np.asarray(tets, dtype=np.int64))
