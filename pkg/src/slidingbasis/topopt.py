"""Linear tetrahedral FEM and the multi-material compliance design problem.

Elements are 4-node tets with linear shape functions, so the element
stiffness is E_e times a geometry-only matrix.  The design pipeline maps
basis weights to densities (logistic bound), smooths them (density filter),
interpolates stiffness on the ordered material ladder, and solves the
equilibrium nested inside every objective evaluation.  Compliance
sensitivities are self-adjoint, so the analytic gradient costs no extra
solve.
"""

from __future__ import annotations

import logging
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .basis import reduce_gradient, synthesize_field
from .domains import TetMesh, element_measures
from .errors import SingularSystemError, SolverError
from .filters import (
    DensityFilterKernel,
    LogisticBounds,
    MaterialSet,
    density_filter_apply,
    density_filter_chain,
    logistic_bound,
    logistic_bound_grad,
    ordered_simp,
)
from .optimize import DesignProblem, EvalCounter

logger = logging.getLogger(__name__)

#: additive stiffness floor (fraction of the stiffest modulus) keeping the
#: system definite through void regions while leaving dE/drho untouched
E_FLOOR_FRACTION = 1e-6


def isotropic_elasticity(e_modulus: float, nu: float) -> np.ndarray:
    """6x6 isotropic constitutive matrix in Voigt order (xx yy zz xy yz zx)."""
    lam = e_modulus * nu / ((1 + nu) * (1 - 2 * nu))
    mu = e_modulus / (2 * (1 + nu))
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] += 2 * mu
    d[np.arange(3, 6), np.arange(3, 6)] = mu
    return d


def element_stiffness_unit(mesh: TetMesh, nu: float):
    """Per-element stiffness at unit modulus.

    Returns (k0, dofmap, volumes): k0 is (n_e, 12, 12), dofmap the global
    DOF indices per element, volumes the tet volumes.
    """
    verts = mesh.vertices[mesh.tets]  # (n_e, 4, 3)
    edges = verts[:, 1:] - verts[:, :1]  # (n_e, 3, 3)
    volumes = np.abs(np.linalg.det(edges)) / 6.0
    grads_123 = np.linalg.inv(edges)  # columns: gradients of barycentric 1..3
    grads = np.empty((mesh.n_e, 4, 3))
    grads[:, 1:, :] = np.transpose(grads_123, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)

    b = np.zeros((mesh.n_e, 6, 12))
    for a in range(4):
        gx, gy, gz = grads[:, a, 0], grads[:, a, 1], grads[:, a, 2]
        c = 3 * a
        b[:, 0, c] = gx
        b[:, 1, c + 1] = gy
        b[:, 2, c + 2] = gz
        b[:, 3, c] = gy
        b[:, 3, c + 1] = gx
        b[:, 4, c + 1] = gz
        b[:, 4, c + 2] = gy
        b[:, 5, c] = gz
        b[:, 5, c + 2] = gx

    d1 = isotropic_elasticity(1.0, nu)
    k0 = np.einsum("eia,ij,ejb,e->eab", b, d1, b, volumes, optimize=True)
    dofmap = (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(mesh.n_e, 12)
    return k0, dofmap, volumes


def _scatter(k0_scaled: np.ndarray, dofmap: np.ndarray, n_dofs: int) -> sp.csr_matrix:
    rows = np.repeat(dofmap, 12, axis=1).ravel()
    cols = np.tile(dofmap, (1, 12)).ravel()
    return sp.coo_matrix((k0_scaled.ravel(), (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()


def assemble_stiffness(mesh: TetMesh, e_field: np.ndarray, nu: float) -> sp.csr_matrix:
    """Global stiffness for a per-element modulus field (no BCs applied)."""
    e_field = np.asarray(e_field, dtype=float)
    if e_field.shape != (mesh.n_e,):
        raise ValueError(f"modulus field has shape {e_field.shape}, expected ({mesh.n_e},)")
    k0, dofmap, _ = element_stiffness_unit(mesh, nu)
    return _scatter(k0 * e_field[:, None, None], dofmap, 3 * len(mesh.vertices))


def solve_displacements(
    K: sp.spmatrix,
    loads: np.ndarray,
    fixed_dofs: np.ndarray,
    fixed_values: np.ndarray | None = None,
    tol: float = 1e-8,
) -> np.ndarray:
    """Direct solve of K u = F after row/column elimination of fixed DOFs."""
    n = K.shape[0]
    fixed_dofs = np.asarray(fixed_dofs, dtype=int)
    if len(fixed_dofs) == 0:
        raise SingularSystemError("no fixed DOFs; the structure floats")
    free = np.setdiff1d(np.arange(n), fixed_dofs)
    u = np.zeros(n)
    if fixed_values is not None:
        u[fixed_dofs] = fixed_values
    K = sp.csr_matrix(K)
    k_ff = K[free][:, free]
    rhs = np.asarray(loads, dtype=float)[free] - K[free][:, fixed_dofs] @ u[fixed_dofs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MatrixRankWarning)  # detected below
        u_free = spsolve(k_ff.tocsc(), rhs)
    if not np.all(np.isfinite(u_free)):
        raise SingularSystemError("stiffness system is singular after BC elimination")
    res = np.linalg.norm(k_ff @ u_free - rhs)
    if res > tol * max(np.linalg.norm(rhs), 1.0):
        raise SolverError(f"linear solve residual {res:.3e} above tolerance")
    u[free] = u_free
    return u


def compliance(u: np.ndarray, loads: np.ndarray) -> float:
    """External work F . u (= u' K u at equilibrium)."""
    return float(np.dot(loads, u))


def mass_fraction(rho_field: np.ndarray, measures: np.ndarray, mats: MaterialSet) -> float:
    """Design mass over the fully dense mass rho_max * total volume."""
    rho_field = np.asarray(rho_field, dtype=float)
    measures = np.asarray(measures, dtype=float)
    return float(np.dot(rho_field, measures) / (mats.rho_max * measures.sum()))


@dataclass
class FemModel:
    """Mesh, boundary conditions, loads and cached unit element matrices."""

    mesh: TetMesh
    nu: float
    fixed_dofs: np.ndarray
    loads: np.ndarray
    fixed_values: np.ndarray | None = None
    k0: np.ndarray = field(init=False, repr=False)
    dofmap: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=int))
        self.loads = np.asarray(self.loads, dtype=float)
        n_dofs = 3 * len(self.mesh.vertices)
        if len(self.fixed_dofs) == 0:
            raise SingularSystemError("fixed-displacement set must be non-empty")
        if self.loads.shape != (n_dofs,):
            raise ValueError(f"loads have shape {self.loads.shape}, expected ({n_dofs},)")
        if self.fixed_dofs.min() < 0 or self.fixed_dofs.max() >= n_dofs:
            raise ValueError("fixed DOF index out of range")
        self.k0, self.dofmap, self.volumes = element_stiffness_unit(self.mesh, self.nu)

    @property
    def n_dofs(self) -> int:
        return 3 * len(self.mesh.vertices)

    def solve(self, e_field: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        K = _scatter(self.k0 * np.asarray(e_field)[:, None, None], self.dofmap, self.n_dofs)
        return solve_displacements(K, self.loads, self.fixed_dofs, self.fixed_values, tol)

    def compliance_modulus_gradient(self, u: np.ndarray) -> np.ndarray:
        """dc/dE per element: -u_e' k0_e u_e (self-adjoint sensitivity)."""
        ue = u[self.dofmap]
        return -np.einsum("ea,eab,eb->e", ue, self.k0, ue, optimize=True)


@dataclass
class TopOptConfig:
    """Mass budget, material ladder and filter/solver settings."""

    m_frac: float
    materials: MaterialSet
    filter_radius: float | None = None  # default: 1.5 x mean element edge
    solver_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.m_frac <= 1:
            raise ValueError(f"mass fraction must be in (0, 1], got {self.m_frac}")


def mean_edge_length(mesh: TetMesh) -> float:
    verts = mesh.vertices[mesh.tets]
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    acc = 0.0
    for a, b in pairs:
        acc += np.linalg.norm(verts[:, a] - verts[:, b], axis=1).mean()
    return acc / len(pairs)


@dataclass
class _Analysis:
    f: float
    mass_ratio: float
    u: np.ndarray
    raw: np.ndarray
    rho: np.ndarray
    rho_filtered: np.ndarray
    de_drho: np.ndarray


def topopt_design_problem(
    model: FemModel,
    cfg: TopOptConfig,
    basis_provider,
    bounds: LogisticBounds | None = None,
    kernel: DensityFilterKernel | None = None,
) -> DesignProblem:
    """Compliance minimization with a mass-fraction constraint over weights.

    Pipeline per evaluation: synthesize, logistic-bound to the material
    density range, density-filter, interpolate moduli on the ladder, solve
    equilibrium.  Analytic objective and constraint gradients are provided;
    the evaluation counter counts equilibrium solves.
    """
    mats = cfg.materials
    if bounds is None:
        bounds = LogisticBounds(mats.rho_min, mats.rho_max)
    if kernel is None:
        from .domains import element_centroids
        from .filters import build_density_filter

        r_min = cfg.filter_radius if cfg.filter_radius is not None else 1.5 * mean_edge_length(model.mesh)
        kernel = build_density_filter(element_centroids(model.mesh), r_min)

    measures = model.volumes
    m0 = mats.rho_max * measures.sum()
    e_floor = E_FLOOR_FRACTION * mats.e_max
    counter = EvalCounter()
    cache = OrderedDict()

    def analyze(w) -> _Analysis:
        w = np.asarray(w, dtype=float)
        key = w.tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        basis = basis_provider.get(len(w))
        raw = synthesize_field(basis, w)
        rho = logistic_bound(raw, bounds)
        rho_f = density_filter_apply(rho, kernel)
        e_field, de = ordered_simp(rho_f, mats)
        u = model.solve(e_field + e_floor, tol=cfg.solver_tol)
        f = compliance(u, model.loads)
        counter.add(f)
        out = _Analysis(
            f=f,
            mass_ratio=float(np.dot(rho_f, measures) / m0),
            u=u,
            raw=raw,
            rho=rho,
            rho_filtered=rho_f,
            de_drho=de,
        )
        cache[key] = out
        if len(cache) > 32:
            cache.popitem(last=False)
        return out

    def objective(w):
        return analyze(w).f

    def mass_constraint(w):
        return analyze(w).mass_ratio - cfg.m_frac

    def gradient(w):
        w = np.asarray(w, dtype=float)
        state = analyze(w)
        basis = basis_provider.get(len(w))
        dlog = logistic_bound_grad(state.raw, bounds)
        dc_drho_f = model.compliance_modulus_gradient(state.u) * state.de_drho
        dc_dw = reduce_gradient(basis, density_filter_chain(dc_drho_f, kernel) * dlog)
        dm_dw = reduce_gradient(basis, density_filter_chain(measures / m0, kernel) * dlog)
        return dc_dw, dm_dw.reshape(1, -1)

    return DesignProblem(
        objective=objective,
        constraints=(mass_constraint,),
        analytic_gradient=gradient,
        counter=counter,
    )
