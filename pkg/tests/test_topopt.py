import numpy as np
import pytest

from slidingbasis.basis import BasisProvider, assemble_laplacian
from slidingbasis.domains import box_tet_mesh, element_measures, face_adjacency
from slidingbasis.errors import SingularSystemError
from slidingbasis.filters import MaterialSet
from slidingbasis.optimize import SlidingConfig, numerical_gradient, slide_optimize
from slidingbasis.topopt import (
    FemModel,
    TopOptConfig,
    assemble_stiffness,
    compliance,
    element_stiffness_unit,
    isotropic_elasticity,
    mass_fraction,
    solve_displacements,
    topopt_design_problem,
)

from conftest import cantilever_model

BEAM_MATERIALS = MaterialSet(densities=(0.0, 0.1, 1.0), moduli=(0.0, 2e9, 3e9))


def unit_tet_mesh():
    from slidingbasis.domains import TetMesh

    return TetMesh(
        vertices=np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float),
        tets=np.array([[0, 1, 2, 3]]),
    )


def symbolic_unit_tet_stiffness(e_mod, nu):
    """Independent oracle: vol * B' D B assembled from barycentric gradients.

    For the tet (0,0,0),(1,0,0),(0,1,0),(0,0,1) the shape-function gradients
    are grad l0 = (-1,-1,-1), grad l1 = (1,0,0), grad l2 = (0,1,0),
    grad l3 = (0,0,1), all constant.
    """
    grads = np.array([[-1, -1, -1], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    b = np.zeros((6, 12))
    for a, (gx, gy, gz) in enumerate(grads):
        c = 3 * a
        b[0, c] = gx
        b[1, c + 1] = gy
        b[2, c + 2] = gz
        b[3, c] = gy
        b[3, c + 1] = gx
        b[4, c + 1] = gz
        b[4, c + 2] = gy
        b[5, c] = gz
        b[5, c + 2] = gx
    return (1.0 / 6.0) * b.T @ isotropic_elasticity(e_mod, nu) @ b


def test_single_tet_matches_symbolic_oracle():
    mesh = unit_tet_mesh()
    K = assemble_stiffness(mesh, np.array([2.5e9]), nu=0.3).toarray()
    oracle = symbolic_unit_tet_stiffness(2.5e9, 0.3)
    assert np.abs(K - oracle).max() <= 1e-12 * np.abs(oracle).max()


def test_rigid_body_translation_in_null_space():
    mesh = unit_tet_mesh()
    K = assemble_stiffness(mesh, np.array([1e9]), nu=0.25)
    u = np.tile([0.3, -0.2, 0.7], 4)
    assert np.abs(K @ u).max() <= 1e-12 * 1e9


def test_stiffness_linear_in_modulus():
    mesh = box_tet_mesh(2, 2, 2, 1, 1, 1)
    e = np.linspace(1e9, 2e9, mesh.n_e)
    k1 = assemble_stiffness(mesh, e, 0.3)
    k2 = assemble_stiffness(mesh, 2 * e, 0.3)
    assert np.array_equal(k2.toarray(), 2 * k1.toarray())


def test_patch_test_reproduces_uniform_strain():
    # linear tets must reproduce any affine displacement field exactly
    mesh = box_tet_mesh(3, 2, 2, 1.5, 1.0, 1.0)
    A = np.array([[1e-3, 2e-4, 0.0], [0.0, -5e-4, 1e-4], [3e-4, 0.0, 8e-4]])
    b = np.array([1e-4, -2e-4, 5e-5])
    affine = mesh.vertices @ A.T + b
    coords = mesh.vertices
    on_boundary = (
        np.isclose(coords[:, 0], 0) | np.isclose(coords[:, 0], 1.5)
        | np.isclose(coords[:, 1], 0) | np.isclose(coords[:, 1], 1.0)
        | np.isclose(coords[:, 2], 0) | np.isclose(coords[:, 2], 1.0)
    )
    fixed_nodes = np.nonzero(on_boundary)[0]
    fixed_dofs = (3 * fixed_nodes[:, None] + np.arange(3)).ravel()
    K = assemble_stiffness(mesh, np.full(mesh.n_e, 2e9), nu=0.3)
    u = solve_displacements(
        K, np.zeros(3 * len(coords)), fixed_dofs, fixed_values=affine[fixed_nodes].ravel()
    )
    assert np.abs(u - affine.ravel()).max() <= 1e-10 * np.abs(affine).max()


def test_solve_zero_load_and_superposition(rng):
    mesh, model, _ = cantilever_model(6, 2, 2)
    e = np.full(mesh.n_e, 1e9)
    K = assemble_stiffness(mesh, e, 0.3)
    zero = solve_displacements(K, np.zeros(model.n_dofs), model.fixed_dofs)
    assert np.array_equal(zero, np.zeros(model.n_dofs))
    f1 = np.zeros(model.n_dofs)
    f2 = np.zeros(model.n_dofs)
    free = np.setdiff1d(np.arange(model.n_dofs), model.fixed_dofs)
    f1[rng.choice(free, 5, replace=False)] = rng.standard_normal(5) * 100
    f2[rng.choice(free, 5, replace=False)] = rng.standard_normal(5) * 100
    u12 = solve_displacements(K, f1 + f2, model.fixed_dofs)
    u1 = solve_displacements(K, f1, model.fixed_dofs)
    u2 = solve_displacements(K, f2, model.fixed_dofs)
    scale = np.abs(u12).max()
    assert np.abs(u12 - (u1 + u2)).max() <= 1e-9 * scale


def test_floating_structure_raises():
    mesh = unit_tet_mesh()
    K = assemble_stiffness(mesh, np.array([1e9]), nu=0.3)
    with pytest.raises(SingularSystemError):
        solve_displacements(K, np.ones(12), np.array([], dtype=int))
    # fixing a single node still leaves rotations: singular after elimination
    with pytest.raises((SingularSystemError, Exception)):
        solve_displacements(K, np.ones(12), np.array([0, 1, 2]))


def test_cantilever_matches_beam_theory():
    # Euler-Bernoulli oracle: tip deflection P L^3 / (3 E I)
    E, P = 3e9, -1000.0
    length, width, height = 2.0, 0.2, 0.2
    mesh, model, tip = cantilever_model(100, 10, 10, length, width, height, 0.3, P)
    u = model.solve(np.full(mesh.n_e, E))
    tip_dz = u[3 * tip + 2].mean()
    delta_eb = P * length**3 / (3 * E * (width * height**3 / 12))
    assert abs(tip_dz - delta_eb) / abs(delta_eb) <= 0.05


def test_compliance_identities():
    mesh, model, _ = cantilever_model(8, 2, 2)
    e = np.full(mesh.n_e, 2e9)
    u = model.solve(e)
    c = compliance(u, model.loads)
    assert c > 0
    K = assemble_stiffness(mesh, e, model.nu)
    assert abs(u @ (K @ u) - c) <= 1e-9 * c
    u2 = model.solve(2 * e)
    assert compliance(u2, model.loads) == pytest.approx(c / 2, rel=1e-12)
    assert compliance(np.zeros_like(u), model.loads) == 0.0


def test_mass_fraction_examples(rng):
    mesh = box_tet_mesh(2, 2, 2, 1, 1, 1)
    vols = element_measures(mesh)
    two_mat = MaterialSet(densities=(0.0, 1.0), moduli=(0.0, 1e9))
    assert mass_fraction(np.ones(mesh.n_e), vols, two_mat) == pytest.approx(1.0)
    assert mass_fraction(np.full(mesh.n_e, 0.5), vols, two_mat) == pytest.approx(0.5)
    rho = rng.uniform(0, 1, mesh.n_e)
    brute = sum(r * v for r, v in zip(rho, vols)) / (1.0 * vols.sum())
    assert mass_fraction(rho, vols, two_mat) == pytest.approx(brute, abs=1e-12)


def test_zero_displacement_elements_have_zero_sensitivity():
    mesh, model, _ = cantilever_model(4, 2, 2)
    assert model.compliance_modulus_gradient(np.zeros(model.n_dofs)) == pytest.approx(
        np.zeros(mesh.n_e)
    )


def make_problem(nx=3, ny=2, nz=2, m_frac=0.5):
    mesh, model, _ = cantilever_model(nx, ny, nz, 1.5, 0.5, 0.5, total_load=-500.0)
    provider = BasisProvider(assemble_laplacian(face_adjacency(mesh)))
    cfg = TopOptConfig(m_frac=m_frac, materials=BEAM_MATERIALS)
    return topopt_design_problem(model, cfg, provider), provider, mesh


def test_gradients_match_central_differences(rng):
    problem, _, mesh = make_problem()
    assert mesh.n_e <= 200
    for trial in range(5):
        w = rng.uniform(-0.5, 0.5, 5)
        df, dg = problem.analytic_gradient(w)
        h = 1e-6
        fd_f = np.zeros(5)
        fd_g = np.zeros(5)
        for j in range(5):
            wp, wm = w.copy(), w.copy()
            wp[j] += h
            wm[j] -= h
            fd_f[j] = (problem.objective(wp) - problem.objective(wm)) / (2 * h)
            fd_g[j] = (problem.constraints[0](wp) - problem.constraints[0](wm)) / (2 * h)
        assert np.linalg.norm(df - fd_f) <= 1e-4 * np.linalg.norm(fd_f)
        assert np.linalg.norm(dg[0] - fd_g) <= 1e-6 * max(np.linalg.norm(fd_g), 1e-12)


def test_problem_counts_one_solve_for_all_outputs():
    problem, _, _ = make_problem()
    w = np.full(4, 0.1)
    problem.objective(w)
    problem.constraints[0](w)
    problem.analytic_gradient(w)
    assert problem.counter.count == 1


def test_unconstrained_single_material_densifies():
    # with m_frac = 1 the mass bound is slack and stiffer is always better
    problem, provider, mesh = make_problem(m_frac=1.0)
    cfg = SlidingConfig(
        n_opt=4, n_s=3, s_max=1, epsilon=1e-12, rng_seed=4,
        inner_max_iter=60, inner_ftol=1e-12,
    )
    w, trace = slide_optimize(problem, provider, cfg)
    assert trace.records[0].accepted
    assert w[0] > 0  # constant mode pushed toward dense
    assert problem.constraints[0](w) <= 1e-6


def test_small_scenario_respects_mass_constraint():
    problem, provider, mesh = make_problem(nx=4, ny=2, nz=2, m_frac=0.5)
    cfg = SlidingConfig(
        n_opt=5, n_s=4, s_max=2, epsilon=None, rng_seed=0,
        inner_max_iter=80, inner_ftol=1e-10,
    )
    w, trace = slide_optimize(problem, provider, cfg)
    assert trace.records[0].accepted
    assert problem.constraints[0](w) <= 1e-6
    assert trace.best_objective < problem.objective(np.zeros(5))
