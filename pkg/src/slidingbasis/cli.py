"""Batch front-end: scenario orchestration and deterministic run artifacts.

Subcommands: ``basis`` (compute/export an eigenbasis), ``simulate`` (forward
burn only), ``rocket`` and ``topopt`` (design runs), ``compare`` (run several
modes on one config and tabulate).  Flags override config keys.  Exit codes:
0 success, 2 configuration, 3 solver, 4 physics/domain, 1 unexpected.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import io as sio
from .basis import (
    BasisProvider,
    IdentityBasisProvider,
    assemble_laplacian,
    save_basis,
    synthesize_field,
)
from .config import RunConfig, load_raw_config, load_run_config
from .domains import build_quad_grid, face_adjacency, load_tet_mesh, n_components
from .errors import (
    ConfigError,
    InvalidDomainError,
    InvalidFieldError,
    SingularExponentError,
    SingularSystemError,
    SlidingBasisError,
    SolverError,
    SpectralFailureError,
)
from .filters import density_filter_apply, logistic_bound, snap_to_materials
from .optimize import fixed_basis_optimize, slide_optimize
from .rocket import (
    TARGET_KINDS,
    inner_surface_radii,
    make_target_profile,
    mask_field,
    rocket_design_problem,
    simulate_thrust_profile,
    solve_eikonal,
    ThrustProfile,
)
from .topopt import FemModel, topopt_design_problem

logger = logging.getLogger(__name__)

EXIT_CONFIG, EXIT_SOLVER, EXIT_PHYSICS = 2, 3, 4


@dataclass
class RunArtifacts:
    """Everything one run produced, plus where it was written."""

    out_dir: str
    snapshot: dict
    summary: dict
    trace: object = None
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fields: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)


def _rocket_grid(cfg: RunConfig):
    p = cfg.rocket_params
    return build_quad_grid(cfg.grid_shape[0], cfg.grid_shape[1], p.r_in, p.r_out, p.length)


def _provider(cfg: RunConfig, n_e: int, laplacian):
    if cfg.mode == "conventional":
        return IdentityBasisProvider(n_e)
    return BasisProvider(laplacian)


def _target_profile(cfg: RunConfig, grid) -> ThrustProfile:
    if cfg.target_kind not in TARGET_KINDS:
        return sio.read_profile_csv(cfg.target_kind)
    scale = cfg.target_scale
    if scale == "auto":
        p, b = cfg.rocket_params, cfg.rocket_bounds
        mid = np.full(grid.n_e, 0.5 * (b.l_mb + b.u_mb))
        ref = simulate_thrust_profile(
            mid, p, grid, t_burn=cfg.target_t_burn, n_samples=cfg.n_samples
        )
        scale = float(np.mean(ref.thrust))
        logger.info("auto target scale resolved to %.6g", scale)
    return make_target_profile(
        cfg.target_kind, cfg.target_t_burn, scale, n_samples=cfg.n_samples, **cfg.target_ratios
    )


def _optimize(cfg: RunConfig, problem, provider):
    if cfg.mode == "sliding":
        return slide_optimize(problem, provider, cfg.sliding)
    k = cfg.fixed_k if cfg.mode == "fixed" else provider.max_k
    if k is None:
        raise ConfigError("mode 'fixed' needs sliding.fixed_k")
    return fixed_basis_optimize(problem, provider, k, cfg.sliding)


def run(config_path, overrides: dict | None = None) -> RunArtifacts:
    """Execute the pipeline selected by a config file and write all artifacts."""
    cfg = load_run_config(config_path, overrides)
    if cfg.app == "rocket":
        artifacts = _run_rocket(cfg)
    else:
        artifacts = _run_topopt(cfg)
    return artifacts


def _run_rocket(cfg: RunConfig) -> RunArtifacts:
    t0 = time.perf_counter()
    grid = _rocket_grid(cfg)
    provider = _provider(cfg, grid.n_e, assemble_laplacian(face_adjacency(grid)))
    target = _target_profile(cfg, grid)
    if cfg.resolved["target"]["scale"] == "auto":
        # target shapes have mean 1 before scaling, so this is the resolved scale
        cfg.resolved["target"]["scale"] = float(np.mean(target.thrust))
    params, bounds = cfg.rocket_params, cfg.rocket_bounds
    problem = rocket_design_problem(target, params, grid, bounds, provider)
    weights, trace = _optimize(cfg, problem, provider)

    rate = logistic_bound(synthesize_field(provider.get(len(weights)), weights), bounds)
    phi = solve_eikonal(rate, grid)
    t_burn = target.duration
    achieved = simulate_thrust_profile(rate, params, grid, t_burn=t_burn, times=target.times)
    rate_masked = mask_field(rate, phi, t_burn, fill=bounds.l_mb)
    r_b = inner_surface_radii(phi, t_burn)

    out = _prepare_out(cfg.out_dir)
    sio.write_field_vtk(rate, grid, os.path.join(out, "burn_rate.vtk"), name="burn_rate")
    sio.write_field_csv(rate, os.path.join(out, "burn_rate.csv"), name="burn_rate")
    sio.write_field_vtk(rate_masked, grid, os.path.join(out, "burn_rate_masked.vtk"), name="burn_rate")
    sio.write_field_csv(rate_masked, os.path.join(out, "burn_rate_masked.csv"), name="burn_rate")
    sio.write_profile_csv(target, os.path.join(out, "profile_target.csv"))
    sio.write_profile_csv(achieved, os.path.join(out, "profile_achieved.csv"))
    sio.write_station_report_csv(
        grid.cell_axials(), r_b, params.r_in, os.path.join(out, "stations.csv")
    )
    sio.write_trace_csv(trace, os.path.join(out, "trace.csv"))
    sio.write_weights(weights, os.path.join(out, "weights.txt"))

    metric = problem.convergence_metric(weights) if len(weights) else float("nan")
    summary = {
        "app": "rocket",
        "mode": cfg.mode,
        "seed": cfg.seed,
        "total_basis": int(trace.explored_k),
        "objective": trace.best_objective,
        "match_error_pct": float(metric),
        "evaluations": int(trace.total_evaluations),
        "converged": bool(trace.converged),
        "stop_reason": trace.stop_reason,
        "constraint_satisfied": bool(np.all(r_b > params.r_in)),
        "seconds": time.perf_counter() - t0,
    }
    sio.write_summary_json(summary, os.path.join(out, "summary.json"))
    sio.write_summary_json(cfg.resolved, os.path.join(out, "config_snapshot.json"))
    return RunArtifacts(
        out_dir=out, snapshot=cfg.resolved, summary=summary, trace=trace, weights=weights,
        fields={"burn_rate": rate, "burn_rate_masked": rate_masked},
        profiles={"target": target, "achieved": achieved},
    )


def read_bc_csv(path) -> np.ndarray:
    """Fixed-node list: header 'node', one 0-based node id per line."""
    nodes = []
    with open(path) as fh:
        header = fh.readline().strip().lower()
        if header != "node":
            raise ConfigError(f"{path}: expected header 'node'")
        for line in fh:
            if line.strip():
                nodes.append(int(line))
    if not nodes:
        raise ConfigError(f"{path}: no fixed nodes")
    nodes = np.asarray(nodes, dtype=int)
    return (3 * nodes[:, None] + np.arange(3)).ravel()


def read_loads_csv(path, n_nodes: int) -> np.ndarray:
    """Nodal loads: header 'node,fx,fy,fz'."""
    loads = np.zeros(3 * n_nodes)
    with open(path) as fh:
        header = fh.readline().strip().lower().replace(" ", "")
        if header != "node,fx,fy,fz":
            raise ConfigError(f"{path}: expected header 'node,fx,fy,fz'")
        for line in fh:
            if not line.strip():
                continue
            parts = line.split(",")
            node = int(parts[0])
            loads[3 * node : 3 * node + 3] += [float(x) for x in parts[1:4]]
    return loads


def _run_topopt(cfg: RunConfig) -> RunArtifacts:
    t0 = time.perf_counter()
    mesh = load_tet_mesh(*cfg.mesh_paths)
    adj = face_adjacency(mesh)
    if n_components(adj) != 1:
        raise InvalidDomainError("mesh dual graph is not connected")
    provider = _provider(cfg, mesh.n_e, assemble_laplacian(adj))
    model = FemModel(
        mesh=mesh,
        nu=cfg.nu,
        fixed_dofs=read_bc_csv(cfg.bc_path),
        loads=read_loads_csv(cfg.loads_path, len(mesh.vertices)),
    )
    problem = topopt_design_problem(model, cfg.topopt, provider)
    weights, trace = _optimize(cfg, problem, provider)

    from .filters import LogisticBounds, build_density_filter
    from .domains import element_centroids
    from .topopt import mean_edge_length

    mats = cfg.topopt.materials
    bounds = LogisticBounds(mats.rho_min, mats.rho_max)
    r_min = cfg.topopt.filter_radius
    if r_min is None:
        r_min = 1.5 * mean_edge_length(mesh)
    kernel = build_density_filter(element_centroids(mesh), r_min)
    rho = density_filter_apply(
        logistic_bound(synthesize_field(provider.get(len(weights)), weights), bounds), kernel
    )
    snapped, mat_id = snap_to_materials(rho, mats)

    out = _prepare_out(cfg.out_dir)
    sio.write_field_vtk(rho, mesh, os.path.join(out, "density.vtk"), name="density")
    sio.write_field_csv(rho, os.path.join(out, "density.csv"), name="density")
    sio.write_field_vtk(mat_id.astype(float), mesh, os.path.join(out, "material_id.vtk"), name="material_id")
    sio.write_field_csv(snapped, os.path.join(out, "density_snapped.csv"), name="density_snapped")
    sio.write_trace_csv(trace, os.path.join(out, "trace.csv"))
    sio.write_weights(weights, os.path.join(out, "weights.txt"))

    from .topopt import mass_fraction

    summary = {
        "app": "topopt",
        "mode": cfg.mode,
        "seed": cfg.seed,
        "total_basis": int(trace.explored_k),
        "objective": trace.best_objective,
        "mass_fraction": mass_fraction(rho, model.volumes, mats),
        "m_frac_limit": cfg.topopt.m_frac,
        "evaluations": int(trace.total_evaluations),
        "converged": bool(trace.converged),
        "stop_reason": trace.stop_reason,
        "seconds": time.perf_counter() - t0,
    }
    sio.write_summary_json(summary, os.path.join(out, "summary.json"))
    sio.write_summary_json(cfg.resolved, os.path.join(out, "config_snapshot.json"))
    return RunArtifacts(
        out_dir=out, snapshot=cfg.resolved, summary=summary, trace=trace, weights=weights,
        fields={"density": rho, "density_snapped": snapped, "material_id": mat_id},
    )


def _prepare_out(out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.abspath(out_dir)


def _cmd_basis(args) -> int:
    cfg = load_run_config(args.config, _overrides(args))
    if cfg.app == "rocket":
        domain = _rocket_grid(cfg)
    else:
        domain = load_tet_mesh(*cfg.mesh_paths)
    adj = face_adjacency(domain)
    if n_components(adj) != 1:
        raise InvalidDomainError("domain dual graph is not connected")
    laplacian = assemble_laplacian(adj)
    provider = BasisProvider(laplacian)
    k = args.k or cfg.sliding.n_opt
    basis = provider.get(k)
    out = _prepare_out(cfg.out_dir)
    with open(os.path.join(out, "eigenvalues.csv"), "w") as fh:
        fh.write("index,eigenvalue\n")
        for i, lam in enumerate(basis.eigenvalues):
            fh.write(f"{i},{lam:.17g}\n")
    for i in range(min(k, args.export_vectors)):
        sio.write_field_vtk(
            basis.vectors[:, i], domain, os.path.join(out, f"eigenvector_{i:03d}.vtk"),
            name=f"eigenvector_{i:03d}",
        )
    if args.cache:
        save_basis(basis, args.cache)
    print(f"wrote {k} eigenpairs to {out}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = load_run_config(args.config, _overrides(args))
    if cfg.app != "rocket":
        raise ConfigError("simulate works on rocket configs")
    grid = _rocket_grid(cfg)
    bounds = cfg.rocket_bounds
    if args.weights:
        provider = BasisProvider(assemble_laplacian(face_adjacency(grid)))
        w = sio.read_weights(args.weights)
        rate = logistic_bound(synthesize_field(provider.get(len(w)), w), bounds)
    else:
        rate = np.full(grid.n_e, 0.5 * (bounds.l_mb + bounds.u_mb))
    profile = simulate_thrust_profile(
        rate, cfg.rocket_params, grid, n_samples=cfg.n_samples, t_burn=cfg.target_t_burn
    )
    phi = solve_eikonal(rate, grid)
    out = _prepare_out(cfg.out_dir)
    sio.write_field_vtk(rate, grid, os.path.join(out, "burn_rate.vtk"), name="burn_rate")
    sio.write_field_vtk(phi.flat, grid, os.path.join(out, "arrival_time.vtk"), name="arrival_time")
    sio.write_profile_csv(profile, os.path.join(out, "profile.csv"))
    print(f"simulated {len(profile.times)} samples to {out}")
    return 0


def _cmd_run(args) -> int:
    artifacts = run(args.config, _overrides(args))
    summary = artifacts.summary
    keys = ("mode", "total_basis", "objective", "evaluations", "stop_reason")
    print("  ".join(f"{k}={summary[k]}" for k in keys))
    print(f"artifacts in {artifacts.out_dir}")
    return 0


def _cmd_compare(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    rows = []
    explored_k = None
    for mode in modes:
        overrides = _overrides(args)
        overrides["mode"] = mode
        overrides["out"] = os.path.join(args.out, mode)
        if mode == "fixed" and explored_k is not None:
            # cover the same basis the sliding run explored unless pinned
            raw = load_raw_config(args.config)
            if "fixed_k" not in raw.get("sliding", {}):
                overrides["fixed_k"] = explored_k
        artifacts = run(args.config, overrides)
        s = artifacts.summary
        if mode == "sliding":
            explored_k = s["total_basis"]
        rows.append(
            (mode, s["total_basis"], s["objective"],
             s.get("match_error_pct", float("nan")), s["evaluations"], s["seconds"])
        )
    out = _prepare_out(args.out)
    sio.write_comparison_csv(rows, os.path.join(out, "comparison.csv"))
    for row in rows:
        print(f"{row[0]:>12}: k={row[1]} objective={row[2]:.6g} evaluations={row[4]}")
    return 0


def _overrides(args) -> dict:
    out = {}
    for key in ("out", "seed", "mode", "target"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    if getattr(args, "mesh", None):
        parts = args.mesh.split(",")
        if len(parts) != 2:
            raise ConfigError("--mesh wants 'nodes.node,elements.ele'")
        out["mesh_nodes"], out["mesh_elements"] = parts
    for key in ("bc", "loads"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbopt", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="INFO-level progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=True):
        p.add_argument("--config", required=True, help="TOML (or snapshot JSON) run config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
        if mode:
            p.add_argument("--mode", choices=("sliding", "fixed", "conventional"))

    p = sub.add_parser("basis", help="compute and export the domain eigenbasis")
    common(p, mode=False)
    p.add_argument("--k", type=int, help="number of eigenpairs (default: sliding.n_opt)")
    p.add_argument("--export-vectors", type=int, default=6, help="eigenvector VTKs to write")
    p.add_argument("--cache", help="write an .npz eigenpair cache here")
    p.set_defaults(func=_cmd_basis)

    p = sub.add_parser("simulate", help="forward burn simulation, no optimization")
    common(p, mode=False)
    p.add_argument("--weights", help="ASCII weight file (default: uniform mid-bound field)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("rocket", help="thrust-profile matching design run")
    common(p)
    p.add_argument("--target", help="target kind or CSV path (overrides config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("topopt", help="multi-material compliance design run")
    common(p)
    p.add_argument("--mesh", help="'nodes.node,elements.ele' (overrides config)")
    p.add_argument("--bc", help="fixed-node CSV (overrides config)")
    p.add_argument("--loads", help="nodal load CSV (overrides config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several modes and tabulate")
    common(p, mode=False)
    p.add_argument("--modes", default="sliding,fixed", help="comma list of modes to run")
    p.add_argument("--target", help="target kind or CSV path (overrides config)")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SpectralFailureError, SingularSystemError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidFieldError, InvalidDomainError, SingularExponentError) as exc:
        print(f"physics/domain error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except SlidingBasisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
