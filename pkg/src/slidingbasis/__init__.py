"""Reduced-order spatial-field design optimization on Laplacian eigenbases.

Material fields are parameterized as truncated weighted sums of the
eigenvectors of the combinatorial Laplacian on the element dual graph, and
the weights are optimized a small window at a time, sliding from smooth to
oscillatory basis vectors.  Ships two applications: graded solid-fuel
burnback matching a target thrust profile, and multi-material compliance
topology optimization.
"""

from .basis import (
    BasisProvider,
    IdentityBasisProvider,
    SpectralBasis,
    assemble_laplacian,
    extend_basis,
    load_basis,
    reduce_gradient,
    save_basis,
    smallest_eigenpairs,
    synthesize_field,
)
from .domains import (
    ElementAdjacency,
    QuadGrid,
    TetMesh,
    box_tet_mesh,
    build_quad_grid,
    element_centroids,
    element_measures,
    face_adjacency,
    load_tet_mesh,
    save_tet_mesh,
)
from .filters import (
    DensityFilterKernel,
    LogisticBounds,
    MaterialSet,
    build_density_filter,
    density_filter_apply,
    density_filter_chain,
    logistic_bound,
    logistic_bound_grad,
    ordered_simp,
    snap_to_materials,
)
from .optimize import (
    DesignProblem,
    SlideTrace,
    SlidingConfig,
    counted_problem,
    fixed_basis_optimize,
    initialize_weights,
    inner_solve,
    numerical_gradient,
    slide_optimize,
    total_explored_basis,
    windows_to_cover,
)
from .rocket import (
    ArrivalTimeField,
    BurnFrontCurve,
    RocketParams,
    ThrustProfile,
    consistent_specific_impulse,
    extract_front,
    inner_surface_radii,
    make_target_profile,
    mask_field,
    revolved_flux_integral,
    rocket_design_problem,
    simulate_thrust_profile,
    solve_eikonal,
    thrust_at,
)
from .topopt import (
    FemModel,
    TopOptConfig,
    assemble_stiffness,
    compliance,
    mass_fraction,
    solve_displacements,
    topopt_design_problem,
)

__version__ = "0.1.0"
