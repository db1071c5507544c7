"""Run configuration: parsing, validation, resolved snapshots.

Configs are TOML files; the resolved snapshot written next to the run
artifacts is JSON with the same structure (every default and "auto" value
filled in), and the loader accepts either format, so a snapshot can be
re-run verbatim.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .filters import LogisticBounds, MaterialSet
from .optimize import SlidingConfig
from .rocket import TARGET_KINDS, RocketParams
from .topopt import TopOptConfig

MODES = ("sliding", "fixed", "conventional")


@dataclass
class RunConfig:
    """Fully resolved settings for one optimization run."""

    mode: str
    seed: int
    out_dir: str
    app: str  # "rocket" | "topopt"
    sliding: SlidingConfig
    fixed_k: int | None
    resolved: dict  # snapshot source: complete, defaults filled in
    # rocket settings
    grid_shape: tuple | None = None  # (n_r, n_z)
    rocket_params: RocketParams | None = None
    rocket_bounds: LogisticBounds | None = None
    n_samples: int = 24
    target_kind: str | None = None
    target_t_burn: float | None = None
    target_scale: float | str | None = None
    target_ratios: dict = field(default_factory=dict)
    # topopt settings
    mesh_paths: tuple | None = None  # (node, ele)
    topopt: TopOptConfig | None = None
    nu: float = 0.3
    bc_path: str | None = None
    loads_path: str | None = None


def _require(table: dict, key, context: str):
    if key not in table:
        raise ConfigError(f"missing key '{key}' in [{context}]")
    return table[key]


def _resolve_path(path: str, base_dir: str) -> str:
    path = os.path.expanduser(str(path))
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return os.path.abspath(path)


def _check_file(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"{what} file not found: {path}")
    return path


def load_raw_config(path) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        if str(path).endswith(".json"):
            with open(path) as fh:
                return json.load(fh)
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse, apply flag overrides, fill defaults, validate."""
    raw = load_raw_config(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    overrides = overrides or {}

    mode = overrides.get("mode") or raw.get("mode", "sliding")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    seed = overrides.get("seed")
    seed = int(raw.get("seed", 0)) if seed is None else int(seed)
    out_dir = overrides.get("out") or raw.get("output_dir")
    if not out_dir:
        raise ConfigError("no output directory: set output_dir or pass --out")

    has_rocket = "rocket" in raw
    has_topopt = "topopt" in raw
    if has_rocket == has_topopt:
        raise ConfigError("exactly one of [rocket] or [topopt] must be configured")
    app = "rocket" if has_rocket else "topopt"

    sl_raw = dict(raw.get("sliding", {}))
    sl_raw["rng_seed"] = seed
    try:
        sliding = SlidingConfig(
            n_opt=int(sl_raw.get("n_opt", 20)),
            n_s=int(sl_raw["n_s"]) if "n_s" in sl_raw else None,
            s_max=int(sl_raw.get("s_max", 2)),
            epsilon=float(sl_raw["epsilon"]) if "epsilon" in sl_raw else None,
            rng_seed=seed,
            inner_max_iter=int(sl_raw.get("inner_max_iter", 100)),
            inner_ftol=float(sl_raw.get("inner_ftol", 1e-10)),
            fd_step=float(sl_raw.get("fd_step", 1e-6)),
            init_scale=float(sl_raw.get("init_scale", 0.01)),
            converged_tol=float(sl_raw["converged_tol"]) if "converged_tol" in sl_raw else None,
            max_basis=int(sl_raw["max_basis"]) if "max_basis" in sl_raw else None,
            zero_first_window=bool(sl_raw.get("zero_first_window", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [sliding] settings: {exc}") from exc
    fixed_k = overrides.get("fixed_k", sl_raw.get("fixed_k"))
    fixed_k = int(fixed_k) if fixed_k is not None else None
    if mode == "fixed" and fixed_k is None:
        raise ConfigError("mode 'fixed' needs sliding.fixed_k (the basis count to optimize)")

    cfg = RunConfig(
        mode=mode, seed=seed, out_dir=out_dir, app=app,
        sliding=sliding, fixed_k=fixed_k, resolved={},
    )

    if app == "rocket":
        _load_rocket(cfg, raw, overrides, base_dir)
    else:
        _load_topopt(cfg, raw, overrides, base_dir)

    cfg.resolved = _snapshot_dict(cfg, base_dir)
    return cfg


def _load_rocket(cfg: RunConfig, raw: dict, overrides: dict, base_dir: str):
    dom = raw.get("domain", {})
    n_r, n_z = int(_require(dom, "n_r", "domain")), int(_require(dom, "n_z", "domain"))
    rk = raw["rocket"]
    try:
        params = RocketParams(
            c_f=float(rk.get("c_f", 1.5)),
            a_t=float(rk.get("a_t", 0.01)),
            c_s=float(rk.get("c_s", 1000.0)),
            rho_p=float(rk.get("rho_p", 1800.0)),
            p_ref=float(rk.get("p_ref", 5e6)),
            n=float(rk.get("n", 0.3)),
            i_sp=float(rk["i_sp"]) if "i_sp" in rk else None,
            r_in=float(rk.get("r_in", 0.25)),
            r_out=float(rk.get("r_out", 1.0)),
            length=float(rk.get("length", 2.0)),
        )
        b = rk.get("bounds", {})
        bounds = LogisticBounds(
            l_mb=float(_require(b, "lower", "rocket.bounds")),
            u_mb=float(_require(b, "upper", "rocket.bounds")),
            kappa=float(b["kappa"]) if "kappa" in b else None,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [rocket] settings: {exc}") from exc

    tgt = raw.get("target", {})
    kind = overrides.get("target") or tgt.get("kind")
    if kind is None:
        raise ConfigError("no target: set [target].kind or pass --target")
    if kind not in TARGET_KINDS:
        kind = _check_file(_resolve_path(kind, base_dir), "target profile CSV")
    scale = tgt.get("scale", "auto")
    if scale != "auto":
        scale = float(scale)
        if scale <= 0:
            raise ConfigError("target scale must be positive (or 'auto')")

    cfg.grid_shape = (n_r, n_z)
    cfg.rocket_params = params
    cfg.rocket_bounds = bounds
    cfg.n_samples = int(rk.get("n_samples", 24))
    cfg.target_kind = kind
    cfg.target_t_burn = float(tgt["t_burn"]) if "t_burn" in tgt else None
    cfg.target_scale = scale
    cfg.target_ratios = {
        k: float(tgt[k]) for k in ("ramp_ratio", "step_ratio", "bucket_ratio") if k in tgt
    }
    if cfg.target_kind in TARGET_KINDS and cfg.target_t_burn is None:
        raise ConfigError("[target] needs t_burn for synthetic profile kinds")
    if cfg.n_samples < 2:
        raise ConfigError("rocket.n_samples must be >= 2")


def _load_topopt(cfg: RunConfig, raw: dict, overrides: dict, base_dir: str):
    dom = raw.get("domain", {})
    node = overrides.get("mesh_nodes") or dom.get("nodes")
    ele = overrides.get("mesh_elements") or dom.get("elements")
    if not node or not ele:
        raise ConfigError("topopt needs [domain].nodes and [domain].elements (or --mesh)")
    node = _check_file(_resolve_path(node, base_dir), "mesh node")
    ele = _check_file(_resolve_path(ele, base_dir), "mesh element")

    tp = raw["topopt"]
    m = tp.get("materials", {})
    try:
        mats = MaterialSet(
            densities=tuple(float(x) for x in _require(m, "densities", "topopt.materials")),
            moduli=tuple(float(x) for x in _require(m, "moduli", "topopt.materials")),
            exponent=float(tp.get("penalization", 3.0)),
        )
        topopt = TopOptConfig(
            m_frac=float(_require(tp, "m_frac", "topopt")),
            materials=mats,
            filter_radius=float(tp["filter_radius"]) if "filter_radius" in tp else None,
            solver_tol=float(tp.get("solver_tol", 1e-8)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [topopt] settings: {exc}") from exc

    bc = overrides.get("bc") or tp.get("bc")
    loads = overrides.get("loads") or tp.get("loads")
    if not bc or not loads:
        raise ConfigError("topopt needs bc and loads CSV paths")
    cfg.mesh_paths = (node, ele)
    cfg.topopt = topopt
    cfg.nu = float(tp.get("nu", 0.3))
    cfg.bc_path = _check_file(_resolve_path(bc, base_dir), "boundary-condition")
    cfg.loads_path = _check_file(_resolve_path(loads, base_dir), "load")


def _snapshot_dict(cfg: RunConfig, base_dir: str) -> dict:
    """Complete, re-runnable dict of every consumed tunable."""
    sl = {
        "n_opt": cfg.sliding.n_opt,
        "n_s": cfg.sliding.n_s,
        "s_max": cfg.sliding.s_max,
        "inner_max_iter": cfg.sliding.inner_max_iter,
        "inner_ftol": cfg.sliding.inner_ftol,
        "fd_step": cfg.sliding.fd_step,
        "init_scale": cfg.sliding.init_scale,
        "zero_first_window": cfg.sliding.zero_first_window,
    }
    if cfg.sliding.epsilon is not None:
        sl["epsilon"] = cfg.sliding.epsilon
    if cfg.sliding.converged_tol is not None:
        sl["converged_tol"] = cfg.sliding.converged_tol
    if cfg.sliding.max_basis is not None:
        sl["max_basis"] = cfg.sliding.max_basis
    if cfg.fixed_k is not None:
        sl["fixed_k"] = cfg.fixed_k
    out = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "output_dir": os.path.abspath(cfg.out_dir),
        "sliding": sl,
    }
    if cfg.app == "rocket":
        p = cfg.rocket_params
        out["domain"] = {"n_r": cfg.grid_shape[0], "n_z": cfg.grid_shape[1]}
        out["rocket"] = {
            "c_f": p.c_f, "a_t": p.a_t, "c_s": p.c_s, "rho_p": p.rho_p,
            "p_ref": p.p_ref, "n": p.n, "i_sp": p.i_sp, "r_in": p.r_in,
            "r_out": p.r_out, "length": p.length, "n_samples": cfg.n_samples,
            "bounds": {
                "lower": cfg.rocket_bounds.l_mb,
                "upper": cfg.rocket_bounds.u_mb,
                "kappa": cfg.rocket_bounds.kappa,
            },
        }
        tgt = {"kind": cfg.target_kind, "scale": cfg.target_scale}
        if cfg.target_t_burn is not None:
            tgt["t_burn"] = cfg.target_t_burn
        tgt.update(cfg.target_ratios)
        out["target"] = tgt
    else:
        t = cfg.topopt
        out["domain"] = {"nodes": cfg.mesh_paths[0], "elements": cfg.mesh_paths[1]}
        topo = {
            "m_frac": t.m_frac,
            "nu": cfg.nu,
            "penalization": t.materials.exponent,
            "solver_tol": t.solver_tol,
            "bc": cfg.bc_path,
            "loads": cfg.loads_path,
            "materials": {
                "densities": list(t.materials.densities),
                "moduli": list(t.materials.moduli),
            },
        }
        if t.filter_radius is not None:
            topo["filter_radius"] = t.filter_radius
        out["topopt"] = topo
    return out
