"""Axisymmetric solid-fuel burnback and the thrust-matching design problem.

The burn is posed as a boundary value problem anchored at the outer casing:
the arrival-time field phi measures time-before-burnout, phi = 0 on the
casing, and the burn front at time t is the level set phi = t_burn - t.
phi solves the Eikonal equation |grad phi| = 1 / rate with the per-cell
reference burn rate as speed, discretized by first-order fast marching on
the (r, z) cross-section grid.  Thrust follows from a closed-form relation
between the revolved mass-flux integral over the front and the chamber
pressure power law.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .basis import synthesize_field
from .domains import QuadGrid
from .errors import InvalidFieldError, SingularExponentError
from .filters import LogisticBounds, logistic_bound
from .optimize import DesignProblem, EvalCounter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RocketParams:
    """Physical constants of the chamber, nozzle and propellant.

    i_sp couples the thrust closure to the pressure power law; mass balance
    between the front influx and the nozzle efflux pins it to c_f * c_s
    (see consistent_specific_impulse), but it is stored independently so the
    closure can be exercised with arbitrary values.
    """

    c_f: float = 1.5  # thrust coefficient
    a_t: float = 0.01  # throat area, m^2
    c_s: float = 1000.0  # exhaust speed of sound, m/s
    rho_p: float = 1800.0  # propellant density, kg/m^3
    p_ref: float = 5e6  # reference chamber pressure, Pa
    n: float = 0.3  # pressure exponent of the burn-rate power law
    i_sp: float | None = None  # defaults to the mass-balance value c_f * c_s
    r_in: float = 0.25  # bore radius, m
    r_out: float = 1.0  # casing radius, m
    length: float = 2.0  # chamber length, m

    def __post_init__(self):
        if self.i_sp is None:
            object.__setattr__(self, "i_sp", consistent_specific_impulse(self.c_f, self.c_s))
        for name in ("c_f", "a_t", "c_s", "rho_p", "p_ref", "i_sp", "r_out", "length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.n < 1:
            raise ValueError(f"pressure exponent must lie in (0, 1), got {self.n}")
        if not 0 <= self.r_in < self.r_out:
            raise ValueError(f"need 0 <= r_in < r_out, got {self.r_in}, {self.r_out}")


def consistent_specific_impulse(c_f: float, c_s: float) -> float:
    """The i_sp value that makes in/out mass flow balance exactly."""
    return c_f * c_s


@dataclass
class ArrivalTimeField:
    """Per-cell time-before-burnout phi on the cross-section grid."""

    values: np.ndarray  # (n_r, n_z), [i, j] indexing
    grid: QuadGrid
    accept_order: np.ndarray | None = None  # flat indices in acceptance sequence

    @property
    def flat(self) -> np.ndarray:
        return self.values.T.ravel()

    def max_inside(self, r_min: float) -> float:
        """Largest phi over cells with center radius >= r_min."""
        radii = self.grid.cell_radii()
        sel = radii >= r_min
        if not np.any(sel):
            raise InvalidFieldError(f"no cells outside radius {r_min}")
        return float(self.values[sel, :].max())


def _upwind_value(phi, known, i, j, dr, dz, inv_f):
    """First-order upwind update at (i, j) from `known` neighbor values."""
    n_r, n_z = phi.shape
    a = math.inf  # radial
    if i > 0 and known[i - 1, j]:
        a = phi[i - 1, j]
    if i < n_r - 1 and known[i + 1, j] and phi[i + 1, j] < a:
        a = phi[i + 1, j]
    b = math.inf  # axial
    if j > 0 and known[i, j - 1]:
        b = phi[i, j - 1]
    if j < n_z - 1 and known[i, j + 1] and phi[i, j + 1] < b:
        b = phi[i, j + 1]
    if a is math.inf and b is math.inf:
        return math.inf
    if b is math.inf:
        return a + dr * inv_f
    if a is math.inf:
        return b + dz * inv_f
    # two-axis quadratic; fall back to the smaller single axis when the
    # root would undercut the larger neighbor (not upwind there)
    ir2, iz2 = 1.0 / (dr * dr), 1.0 / (dz * dz)
    qa = ir2 + iz2
    qb = -2.0 * (a * ir2 + b * iz2)
    qc = a * a * ir2 + b * b * iz2 - inv_f * inv_f
    disc = qb * qb - 4.0 * qa * qc
    if disc >= 0.0:
        root = (-qb + math.sqrt(disc)) / (2.0 * qa)
        if root >= a and root >= b:
            return root
    if a <= b:
        return a + dr * inv_f
    return b + dz * inv_f


def solve_eikonal(speed, grid: QuadGrid) -> ArrivalTimeField:
    """Fast-marching solution of |grad phi| = 1/speed with phi = 0 at the casing.

    The casing boundary condition is applied on the outermost radial cell
    layer; the solution marches inward in non-decreasing phi order.
    """
    speed2d = grid.as_array(np.asarray(speed, dtype=float))
    if not np.all(np.isfinite(speed2d)) or np.any(speed2d <= 0):
        raise InvalidFieldError("burn-rate field must be finite and strictly positive")
    n_r, n_z = grid.n_r, grid.n_z
    dr, dz = grid.dr, grid.dz
    inv_f = 1.0 / speed2d

    phi = np.full((n_r, n_z), math.inf)
    known = np.zeros((n_r, n_z), dtype=bool)
    order = []

    heap = []
    for j in range(n_z):
        phi[n_r - 1, j] = 0.0
        heapq.heappush(heap, (0.0, n_r - 1, j))

    neighbor_steps = ((-1, 0), (1, 0), (0, -1), (0, 1))
    while heap:
        t, i, j = heapq.heappop(heap)
        if known[i, j]:
            continue
        known[i, j] = True
        order.append(j * n_r + i)
        for di, dj in neighbor_steps:
            ni, nj = i + di, j + dj
            if ni < 0 or ni >= n_r or nj < 0 or nj >= n_z or known[ni, nj]:
                continue
            cand = _upwind_value(phi, known, ni, nj, dr, dz, inv_f[ni, nj])
            if cand < phi[ni, nj]:
                phi[ni, nj] = cand
                heapq.heappush(heap, (cand, ni, nj))

    return ArrivalTimeField(values=phi, grid=grid, accept_order=np.asarray(order))


def upwind_residual(phi_field: ArrivalTimeField, speed) -> np.ndarray:
    """|phi - upwind update| at every non-seed cell, from the final values."""
    grid = phi_field.grid
    phi = phi_field.values
    speed2d = grid.as_array(np.asarray(speed, dtype=float))
    res = np.zeros_like(phi)
    for i in range(grid.n_r - 1):
        for j in range(grid.n_z):
            known = phi < phi[i, j]
            val = _upwind_value(phi, known, i, j, grid.dr, grid.dz, 1.0 / speed2d[i, j])
            res[i, j] = abs(phi[i, j] - val)
    return res


@dataclass
class BurnFrontCurve:
    """Isocontour of phi as line segments in the (r, z) plane."""

    segments: np.ndarray  # (n, 2, 2): segment, endpoint, (r, z)
    level: float
    grid: QuadGrid

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def midpoints(self) -> np.ndarray:
        return self.segments.mean(axis=1)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1)


# marching-squares connectivity: case index -> pairs of crossed edges.
# Corners c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1); edges e0=c0c1,
# e1=c1c2, e2=c3c2, e3=c0c3.  Cases 5 and 10 are saddles, resolved below.
_MS_TABLE = {
    1: [(0, 3)], 2: [(0, 1)], 3: [(1, 3)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(2, 3)], 8: [(2, 3)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(0, 3)],
}


def extract_front(phi_field: ArrivalTimeField, level: float) -> BurnFrontCurve:
    """Marching-squares contour of phi at the given level.

    Contours interpolate linearly on the lattice of cell centers, extended
    to the physical domain boundary by edge replication so fronts meet the
    chamber ends instead of stopping half a cell short.  A level outside
    the range of phi yields an empty curve.
    """
    grid = phi_field.grid
    r = np.concatenate([[grid.r0], grid.cell_radii(), [grid.r_outer]])
    z = np.concatenate([[grid.z0], grid.cell_axials(), [grid.z0 + grid.z_extent]])
    v = np.pad(phi_field.values, 1, mode="edge")

    inside = v > level
    c0 = inside[:-1, :-1]
    c1 = inside[1:, :-1]
    c2 = inside[1:, 1:]
    c3 = inside[:-1, 1:]
    case = (
        c0.astype(np.int8)
        + 2 * c1.astype(np.int8)
        + 4 * c2.astype(np.int8)
        + 8 * c3.astype(np.int8)
    )

    v00, v10, v11, v01 = v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]
    rr = r[:-1, None]
    dr_cols = np.diff(r)[:, None]
    zz = z[None, :-1]
    dz_rows = np.diff(z)[None, :]

    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (level - v00) / (v10 - v00)
        t1 = (level - v10) / (v11 - v10)
        t2 = (level - v01) / (v11 - v01)
        t3 = (level - v00) / (v01 - v00)
    shape = case.shape
    pts = np.full((4, *shape, 2), np.nan)
    pts[0, ..., 0] = rr + t0 * dr_cols
    pts[0, ..., 1] = np.broadcast_to(zz, shape)
    pts[1, ..., 0] = np.broadcast_to(r[1:, None], shape)
    pts[1, ..., 1] = zz + t1 * dz_rows
    pts[2, ..., 0] = rr + t2 * dr_cols
    pts[2, ..., 1] = np.broadcast_to(z[None, 1:], shape)
    pts[3, ..., 0] = np.broadcast_to(rr, shape)
    pts[3, ..., 1] = zz + t3 * dz_rows

    starts, ends = [], []
    for c, pairs in _MS_TABLE.items():
        mask = case == c
        if not mask.any():
            continue
        for ea, eb in pairs:
            starts.append(pts[ea][mask])
            ends.append(pts[eb][mask])
    for c in (5, 10):
        mask = case == c
        if not mask.any():
            continue
        center_inside = (v00 + v10 + v11 + v01)[mask] / 4.0 > level
        same = center_inside if c == 5 else ~center_inside
        # saddle: connect around whichever diagonal the center joins
        for ea, eb, sel in ((0, 1, same), (2, 3, same), (0, 3, ~same), (1, 2, ~same)):
            starts.append(pts[ea][mask][sel])
            ends.append(pts[eb][mask][sel])

    if starts:
        segments = np.stack([np.concatenate(starts), np.concatenate(ends)], axis=1)
        good = np.isfinite(segments).all(axis=(1, 2))
        lengths = np.linalg.norm(segments[:, 1] - segments[:, 0], axis=1)
        segments = segments[good & (lengths > 1e-12 * min(grid.dr, grid.dz))]
    else:
        segments = np.zeros((0, 2, 2))
    return BurnFrontCurve(segments=segments, level=level, grid=grid)


def sample_field(field, grid: QuadGrid, points: np.ndarray) -> np.ndarray:
    """Bilinear sample of a per-cell field at (r, z) points on the lattice."""
    v = field if np.asarray(field).ndim == 2 else grid.as_array(np.asarray(field, dtype=float))
    points = np.atleast_2d(points)
    u = np.clip((points[:, 0] - grid.r0) / grid.dr - 0.5, 0.0, grid.n_r - 1 - 1e-12)
    w = np.clip((points[:, 1] - grid.z0) / grid.dz - 0.5, 0.0, grid.n_z - 1 - 1e-12)
    i0 = u.astype(int)
    j0 = w.astype(int)
    fu = u - i0
    fw = w - j0
    return (
        (1 - fu) * (1 - fw) * v[i0, j0]
        + fu * (1 - fw) * v[i0 + 1, j0]
        + (1 - fu) * fw * v[i0, j0 + 1]
        + fu * fw * v[i0 + 1, j0 + 1]
    )


def revolved_flux_integral(curve: BurnFrontCurve, rate_field, rho_p: float) -> float:
    """Mass-flow integral rho_p * rate * area over the revolved front.

    Each (r, z) segment sweeps a conical band of area 2 pi r_mid * length
    when revolved about the axis.
    """
    if curve.n_segments == 0:
        return 0.0
    mid = curve.midpoints
    rates = sample_field(rate_field, curve.grid, mid)
    return float(np.sum(rho_p * rates * 2.0 * np.pi * mid[:, 0] * curve.lengths))


def thrust_at(mdot_integral_term: float, params: RocketParams) -> float:
    """Closed-form thrust from the revolved mass-flux integral term."""
    if abs(1.0 - params.n) < 1e-12:
        raise SingularExponentError("thrust closure is singular at pressure exponent n = 1")
    if mdot_integral_term < 0:
        raise InvalidFieldError("mass-flux integral must be non-negative")
    if mdot_integral_term == 0.0:
        return 0.0
    base = (
        params.p_ref ** (-params.n)
        * params.i_sp ** (1.0 - params.n)
        * params.a_t ** (-params.n)
        * params.c_s**params.n
        * mdot_integral_term
    )
    return float(base ** (1.0 / (1.0 - params.n)))


def chamber_pressure(thrust: float, params: RocketParams) -> float:
    """P_c = thrust / (C_f A_t)."""
    return thrust / (params.c_f * params.a_t)


def nozzle_mass_flow(p_c: float, params: RocketParams) -> float:
    """Exhaust mass flow A_t P_c / c_s."""
    return params.a_t * p_c / params.c_s


@dataclass
class ThrustProfile:
    """Sampled (time, thrust) curve; `kind` tags targets by shape family."""

    times: np.ndarray
    thrust: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.thrust = np.asarray(self.thrust, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.thrust.shape or len(self.times) < 2:
            raise ValueError("profile needs matching 1D times and thrust with >= 2 samples")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("profile times must increase strictly")
        if np.any(self.thrust < 0):
            raise ValueError("thrust must be non-negative")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


TARGET_KINDS = ("constant-acceleration", "constant-deceleration", "two-step", "bucket")


def make_target_profile(
    kind: str,
    t_burn: float,
    scale: float,
    n_samples: int = 24,
    ramp_ratio: float = 2.0,
    step_ratio: float = 1.3,
    bucket_ratio: float = 0.75,
) -> ThrustProfile:
    """Reference target shapes, all with mean thrust equal to `scale`."""
    if t_burn <= 0 or scale <= 0:
        raise ValueError("t_burn and scale must be positive")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    t = np.linspace(0.0, t_burn, n_samples)
    x = t / t_burn
    if kind == "constant-acceleration":
        lo = 2.0 * scale / (1.0 + ramp_ratio)
        th = lo * (1.0 + (ramp_ratio - 1.0) * x)
    elif kind == "constant-deceleration":
        lo = 2.0 * scale / (1.0 + ramp_ratio)
        th = lo * (ramp_ratio - (ramp_ratio - 1.0) * x)
    elif kind == "two-step":
        lo = 2.0 * scale / (1.0 + step_ratio)
        th = np.where(x < 0.5, lo, lo * step_ratio)
    elif kind == "bucket":
        hi = 3.0 * scale / (2.0 + bucket_ratio)
        th = np.where((x >= 1.0 / 3.0) & (x < 2.0 / 3.0), hi * bucket_ratio, hi)
    else:
        raise ValueError(f"unknown target kind {kind!r}; known: {TARGET_KINDS} or a CSV path")
    return ThrustProfile(times=t, thrust=th, kind=kind)


def thrust_samples(
    phi_field: ArrivalTimeField, rate_field, params: RocketParams, times: np.ndarray, t_burn: float
) -> np.ndarray:
    """Thrust at each sample time, via front extraction at phi = t_burn - t."""
    out = np.empty(len(times))
    for idx, t in enumerate(times):
        front = extract_front(phi_field, t_burn - t)
        out[idx] = thrust_at(revolved_flux_integral(front, rate_field, params.rho_p), params)
    return out


def simulate_thrust_profile(
    rate_field,
    params: RocketParams,
    grid: QuadGrid,
    n_samples: int = 24,
    t_burn: float | None = None,
    times: np.ndarray | None = None,
) -> ThrustProfile:
    """Forward burn simulation: Eikonal solve, then thrust at uniform times.

    Without an explicit t_burn the burn lasts until the slowest propellant
    cell (center radius >= r_in) ignites, i.e. max phi over the annulus.
    """
    phi = solve_eikonal(rate_field, grid)
    if t_burn is None:
        t_burn = phi.max_inside(params.r_in)
    if t_burn <= 0:
        raise ValueError("burn duration must be positive")
    if times is None:
        if n_samples < 2:
            raise ValueError("a profile needs at least 2 samples")
        times = np.linspace(0.0, t_burn, n_samples)
    th = thrust_samples(phi, rate_field, params, np.asarray(times, dtype=float), t_burn)
    return ThrustProfile(times=np.asarray(times, dtype=float), thrust=th, kind="simulated")


def inner_surface_radii(phi_field: ArrivalTimeField, t_burn: float) -> np.ndarray:
    """Per axial station, the largest radius where phi >= t_burn.

    This is where ignition happens at t = 0.  Stations whose entire row burns
    out before t_burn report the casing radius r_out (degenerate).
    """
    grid = phi_field.grid
    v = phi_field.values
    radii = grid.cell_radii()
    r_out = grid.r_outer
    hot = v >= t_burn
    out = np.full(grid.n_z, r_out)
    has = hot.any(axis=0)
    n_degenerate = int(np.count_nonzero(~has))
    if n_degenerate:
        logger.debug("%d axial stations burn out before t_burn", n_degenerate)
    i_hot = grid.n_r - 1 - np.argmax(hot[::-1, :], axis=0)
    for j in np.nonzero(has)[0]:
        i = i_hot[j]
        if i >= grid.n_r - 1:
            out[j] = r_out
            continue
        p_hi, p_lo = v[i, j], v[i + 1, j]
        frac = (p_hi - t_burn) / (p_hi - p_lo) if p_hi > p_lo else 0.0
        out[j] = radii[i] + frac * grid.dr
    return out


def mask_field(
    rate_field,
    phi_field: ArrivalTimeField,
    t_burn: float,
    fill: float,
    margin: float | None = None,
):
    """Replace cells that never burn within [0, t_burn] by `fill`.

    Masked cells satisfy phi > t_burn + margin.  Fast-marching values of
    lattice neighbors differ by at most one step over the local rate, so the
    default margin of one diagonal step at the fill rate keeps every front
    sample in [0, t_burn] clear of masked values: re-simulating the masked
    field reproduces the original profile bit-identically.  Pass margin=0 to
    mask everything beyond the ignition surface.
    """
    if margin is None:
        margin = (phi_field.grid.dr + phi_field.grid.dz) / fill
    flat = np.asarray(rate_field, dtype=float).copy()
    flat[phi_field.flat > t_burn + margin] = fill
    return flat


class _LruCache(OrderedDict):
    def __init__(self, maxsize):
        super().__init__()
        self.maxsize = maxsize

    def put(self, key, value):
        self[key] = value
        if len(self) > self.maxsize:
            self.popitem(last=False)


def rocket_design_problem(
    target: ThrustProfile,
    params: RocketParams,
    grid: QuadGrid,
    bounds: LogisticBounds,
    basis_provider,
    constraint_margin: float | None = None,
    normalize: bool = True,
) -> DesignProblem:
    """Thrust-matching problem over basis weights.

    Objective: sum of squared thrust errors at the target sample times
    (scaled by the mean target thrust when `normalize`, which does not move
    the minimizer).  Constraints: one per axial station, ignition radius
    must clear the bore by `constraint_margin` (default one radial cell).
    One Eikonal simulation serves the objective, all constraints and the
    match metric at the same weights; the evaluation counter counts
    simulations.
    """
    if bounds.l_mb <= 0:
        raise InvalidFieldError("lower burn-rate bound must be positive for the Eikonal solve")
    t_burn = target.duration
    margin = grid.dr if constraint_margin is None else constraint_margin
    scale = float(np.mean(target.thrust)) if normalize else 1.0
    counter = EvalCounter()
    cache = _LruCache(maxsize=256)

    def simulate(w):
        key = np.asarray(w, dtype=float).tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        basis = basis_provider.get(len(w))
        rate = logistic_bound(synthesize_field(basis, np.asarray(w, dtype=float)), bounds)
        phi = solve_eikonal(rate, grid)
        th = thrust_samples(phi, rate, params, target.times, t_burn)
        r_b = inner_surface_radii(phi, t_burn)
        f = float(np.sum(((th - target.thrust) / scale) ** 2))
        counter.add(f)
        result = (f, th, r_b)
        cache.put(key, result)
        return result

    def objective(w):
        return simulate(w)[0]

    def station_constraint(j):
        def g(w):
            return (params.r_in + margin - simulate(w)[2][j]) / grid.r_outer

        return g

    def match_error(w):
        th = simulate(w)[1]
        return 100.0 * float(np.mean(np.abs(th - target.thrust) / target.thrust))

    return DesignProblem(
        objective=objective,
        constraints=tuple(station_constraint(j) for j in range(grid.n_z)),
        convergence_metric=match_error,
        counter=counter,
    )
