"""Graph-Laplacian eigenbasis: assembly, smallest eigenpairs, synthesis.

The Laplacian L = D - A lives on the element dual graph.  Its eigenvectors,
ordered by ascending eigenvalue, run from smooth (domain-wide support) to
oscillatory (local support), so a truncated expansion F = B w parameterizes
a spatial field with k << n_e design variables.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .domains import ElementAdjacency
from .errors import SpectralFailureError

#: below this many elements the full dense spectrum is computed once and sliced
DENSE_CUTOFF = 600

ORTHO_TOL = 1e-8
RESIDUAL_TOL = 1e-7


def assemble_laplacian(adj: ElementAdjacency) -> sp.csr_matrix:
    """Combinatorial Laplacian L = D - A of the dual graph, sparse CSR."""
    n = adj.n_e
    degrees = adj.degrees.astype(float)
    off = sp.csr_matrix((-np.ones(len(adj.indices)), adj.indices, adj.indptr), shape=(n, n))
    return (sp.diags(degrees) + off).tocsr()


@dataclass
class SpectralBasis:
    """The k algebraically smallest eigenpairs of a Laplacian.

    ``vectors`` is n_e x k with orthonormal columns; ``eigenvalues`` ascends.
    The source Laplacian is kept so the basis can be extended in place of a
    full decomposition.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    laplacian: sp.csr_matrix

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_e(self) -> int:
        return self.vectors.shape[0]

    def truncated(self, k: int) -> "SpectralBasis":
        """View of the first k columns (no copy)."""
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot truncate basis of {self.k} columns to {k}")
        return SpectralBasis(self.eigenvalues[:k], self.vectors[:, :k], self.laplacian)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first non-negligible entry is positive."""
    scale = np.abs(vectors).max(axis=0)
    scale[scale == 0] = 1.0
    for j in range(vectors.shape[1]):
        nz = np.nonzero(np.abs(vectors[:, j]) > 1e-12 * scale[j])[0]
        if len(nz) and vectors[nz[0], j] < 0:
            vectors[:, j] = -vectors[:, j]
    return vectors


def _validate(eigenvalues, vectors, laplacian):
    gram = vectors.T @ vectors - np.eye(vectors.shape[1])
    ortho = np.abs(gram).max()
    if ortho > ORTHO_TOL:
        raise SpectralFailureError(f"basis not orthonormal (max |B'B - I| = {ortho:.3e})", residual=ortho)
    res = laplacian @ vectors - vectors * eigenvalues
    res_norm = np.linalg.norm(res, axis=0)
    bound = RESIDUAL_TOL * np.maximum(1.0, eigenvalues)
    if np.any(res_norm > bound):
        worst = float(res_norm.max())
        raise SpectralFailureError(f"eigenpair residual {worst:.3e} above tolerance", residual=worst)


def smallest_eigenpairs(L: sp.spmatrix, k: int, maxiter: int = 5000) -> SpectralBasis:
    """The k algebraically smallest eigenpairs, ascending, sign-normalized.

    Small problems use a dense decomposition; larger ones shift-invert
    Lanczos with a fixed start vector so results are deterministic.
    """
    n = L.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    L = sp.csr_matrix(L)
    if n <= DENSE_CUTOFF or k >= n - 1:
        lam, vec = np.linalg.eigh(L.toarray())
        lam, vec = lam[:k].copy(), vec[:, :k].copy()
    else:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            lam, vec = eigsh(L, k=k, sigma=-1e-8, which="LM", v0=v0, maxiter=maxiter)
        except ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            raise SpectralFailureError(
                f"eigensolver converged {got}/{k} pairs after {maxiter} iterations",
                residual=None,
            ) from exc
    order = np.argsort(lam, kind="stable")
    lam, vec = lam[order], vec[:, order]
    vec = _fix_signs(np.ascontiguousarray(vec))
    basis = SpectralBasis(eigenvalues=lam, vectors=vec, laplacian=L)
    _validate(lam, vec, L)
    return basis


def _eigenvalue_groups(eigenvalues, rel_tol=1e-8):
    """Split ascending eigenvalues into near-degenerate multiplet index groups."""
    groups = [[0]]
    for i in range(1, len(eigenvalues)):
        if abs(eigenvalues[i] - eigenvalues[i - 1]) <= rel_tol * max(1.0, abs(eigenvalues[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def extend_basis(basis: SpectralBasis, m: int) -> SpectralBasis:
    """Append the next m eigenpairs, keeping the existing columns bit-identical.

    A fresh k+m computation supplies candidates.  Inside an eigenvalue
    multiplet the solver may return an arbitrary rotation of the eigenspace,
    and a multiplet can straddle the old truncation point; so for each
    multiplet the full fresh span is projected orthogonal to everything kept
    and the missing directions are read off an SVD.  Projections within one
    multiplet stay inside its eigenspace, so appended columns remain
    eigenvectors.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return basis
    k_old, k_new = basis.k, basis.k + m
    if k_new > basis.n_e:
        raise ValueError(f"cannot extend to {k_new} columns on {basis.n_e} elements")
    fresh = smallest_eigenpairs(basis.laplacian, k_new)
    vectors = np.empty((basis.n_e, k_new))
    vectors[:, :k_old] = basis.vectors
    eigenvalues = np.concatenate([basis.eigenvalues, fresh.eigenvalues[k_old:]])

    filled = k_old
    for group in _eigenvalue_groups(fresh.eigenvalues):
        need = sum(1 for i in group if i >= k_old)
        if need == 0:
            continue
        span = fresh.vectors[:, group]
        kept = vectors[:, :filled]
        residual_span = span - kept @ (kept.T @ span)
        u, s, _ = np.linalg.svd(residual_span, full_matrices=False)
        if s[need - 1] < 0.5:
            raise SpectralFailureError(
                f"eigenspace near eigenvalue {fresh.eigenvalues[group[0]]:.6g} lost rank "
                f"under projection (singular value {s[need - 1]:.3e})",
                residual=float(s[need - 1]),
            )
        vectors[:, filled : filled + need] = u[:, :need]
        filled += need
    vectors[:, k_old:] = _fix_signs(vectors[:, k_old:])
    out = SpectralBasis(eigenvalues=eigenvalues, vectors=vectors, laplacian=basis.laplacian)
    _validate(eigenvalues, vectors, basis.laplacian)
    return out


def synthesize_field(basis: SpectralBasis, weights: np.ndarray) -> np.ndarray:
    """F = B w: field on all elements from k basis weights."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (basis.k,):
        raise ValueError(f"weight vector has shape {weights.shape}, basis has k={basis.k}")
    return basis.vectors @ weights


def reduce_gradient(basis: SpectralBasis, field_gradient: np.ndarray) -> np.ndarray:
    """Map a per-element objective gradient into weight space: B' dF."""
    field_gradient = np.asarray(field_gradient, dtype=float)
    if field_gradient.shape != (basis.n_e,):
        raise ValueError(f"field gradient has shape {field_gradient.shape}, expected ({basis.n_e},)")
    return basis.vectors.T @ field_gradient


class BasisProvider:
    """Lazily extendable basis for one domain.

    ``get(k)`` returns a k-column view, computing or extending only when
    needed; previously issued columns never change.
    """

    def __init__(self, laplacian: sp.spmatrix):
        self.laplacian = sp.csr_matrix(laplacian)
        self._basis: SpectralBasis | None = None

    @property
    def max_k(self) -> int:
        return self.laplacian.shape[0]

    def get(self, k: int) -> SpectralBasis:
        if not 1 <= k <= self.max_k:
            raise ValueError(f"k must be in [1, {self.max_k}], got {k}")
        if self._basis is None:
            n = self.laplacian.shape[0]
            k0 = n if n <= DENSE_CUTOFF else k
            self._basis = smallest_eigenpairs(self.laplacian, k0)
        elif k > self._basis.k:
            self._basis = extend_basis(self._basis, k - self._basis.k)
        return self._basis.truncated(k)


class IdentityBasisProvider:
    """Per-element design variables (B = I), the conventional baseline."""

    def __init__(self, n_e: int):
        self.n_e = n_e

    @property
    def max_k(self) -> int:
        return self.n_e

    def get(self, k: int) -> SpectralBasis:
        if not 1 <= k <= self.n_e:
            raise ValueError(f"k must be in [1, {self.n_e}], got {k}")
        vectors = np.zeros((self.n_e, k))
        vectors[np.arange(k), np.arange(k)] = 1.0
        return SpectralBasis(
            eigenvalues=np.zeros(k),
            vectors=vectors,
            laplacian=sp.identity(self.n_e, format="csr") * 0.0,
        )


def laplacian_hash(L: sp.spmatrix) -> str:
    """Stable content hash of a sparse Laplacian, for cache keying."""
    L = sp.csr_matrix(L)
    h = hashlib.sha256()
    h.update(np.asarray(L.shape, dtype=np.int64).tobytes())
    h.update(L.indptr.astype(np.int64).tobytes())
    h.update(L.indices.astype(np.int64).tobytes())
    h.update(L.data.astype(np.float64).tobytes())
    return h.hexdigest()


def save_basis(basis: SpectralBasis, path):
    """Dump eigenpairs to an .npz keyed by the Laplacian content hash."""
    np.savez(
        path,
        eigenvalues=basis.eigenvalues,
        vectors=basis.vectors,
        domain_hash=np.bytes_(laplacian_hash(basis.laplacian).encode()),
    )


def load_basis(path, L: sp.spmatrix) -> SpectralBasis:
    """Load cached eigenpairs, verifying they belong to L."""
    with np.load(path) as data:
        stored = bytes(data["domain_hash"]).decode()
        if stored != laplacian_hash(L):
            raise SpectralFailureError("basis cache does not match this domain")
        basis = SpectralBasis(
            eigenvalues=data["eigenvalues"].copy(),
            vectors=data["vectors"].copy(),
            laplacian=sp.csr_matrix(L),
        )
    _validate(basis.eigenvalues, basis.vectors, basis.laplacian)
    return basis
