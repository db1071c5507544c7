"""Differentiable maps from raw synthesized fields to manufacturable ones.

Three filters: a logistic squashing that keeps field values inside material
bounds without adding constraints, an ordered multi-material power-law
interpolation from density to stiffness, and a radius-based density filter
that suppresses checkerboarding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from scipy.special import expit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogisticBounds:
    """Lower/upper material bounds and the logistic steepness kappa.

    If kappa is omitted it defaults to 6 / (u_mb - l_mb): the transition then
    spans roughly [-3, 3] in raw-field units, a gentle slope for fields of
    order one.
    """

    l_mb: float
    u_mb: float
    kappa: float | None = None

    def __post_init__(self):
        if not self.l_mb < self.u_mb:
            raise ValueError(f"need l_mb < u_mb, got [{self.l_mb}, {self.u_mb}]")
        if self.kappa is None:
            object.__setattr__(self, "kappa", 6.0 / (self.u_mb - self.l_mb))
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


def logistic_bound(x, bounds: LogisticBounds):
    """l_mb + (u_mb - l_mb) / (1 + exp(-kappa x)), elementwise."""
    s = expit(bounds.kappa * np.asarray(x, dtype=float))
    return bounds.l_mb + (bounds.u_mb - bounds.l_mb) * s


def logistic_bound_grad(x, bounds: LogisticBounds):
    """Derivative of logistic_bound: kappa (u_mb - l_mb) s (1 - s)."""
    s = expit(bounds.kappa * np.asarray(x, dtype=float))
    return bounds.kappa * (bounds.u_mb - bounds.l_mb) * s * (1.0 - s)


@dataclass(frozen=True)
class MaterialSet:
    """Ordered discrete materials: normalized densities and Young's moduli.

    Densities ascend strictly in [0, 1]; moduli are non-decreasing so the
    interpolated stiffness is monotone in density.  ``exponent`` is the
    penalization power applied inside each density interval.
    """

    densities: tuple
    moduli: tuple
    exponent: float = 3.0

    def __post_init__(self):
        dens = np.asarray(self.densities, dtype=float)
        mods = np.asarray(self.moduli, dtype=float)
        if dens.shape != mods.shape or dens.ndim != 1 or len(dens) < 2:
            raise ValueError("need matching 1D densities and moduli with at least 2 materials")
        if np.any(np.diff(dens) <= 0) or dens[0] < 0 or dens[-1] > 1:
            raise ValueError("densities must ascend strictly within [0, 1]")
        if np.any(np.diff(mods) < 0):
            raise ValueError("moduli must be non-decreasing")
        if self.exponent < 1:
            raise ValueError(f"penalization exponent must be >= 1, got {self.exponent}")
        object.__setattr__(self, "densities", tuple(dens))
        object.__setattr__(self, "moduli", tuple(mods))

    @property
    def rho_min(self) -> float:
        return self.densities[0]

    @property
    def rho_max(self) -> float:
        return self.densities[-1]

    @property
    def e_max(self) -> float:
        return self.moduli[-1]


def ordered_simp(rho, mats: MaterialSet):
    """Interpolate modulus and its density derivative on the material ladder.

    On each interval [rho_m, rho_{m+1}] the modulus is a_m rho^p + b_m with
    the coefficients pinned by the interval endpoints, so knots are exact and
    the curve is continuous.  Densities outside [rho_min, rho_max] are
    clamped with zero derivative.

    Returns (E, dE_drho) with the input's shape.
    """
    rho = np.asarray(rho, dtype=float)
    dens = np.asarray(mats.densities)
    mods = np.asarray(mats.moduli)
    p = mats.exponent

    low = rho < dens[0]
    high = rho > dens[-1]
    n_sat = int(np.count_nonzero(low) + np.count_nonzero(high))
    if n_sat:
        logger.debug("ordered_simp: %d densities clamped to the material range", n_sat)
    rho_c = np.clip(rho, dens[0], dens[-1])

    m = np.clip(np.searchsorted(dens, rho_c, side="right") - 1, 0, len(dens) - 2)
    dpow = dens**p
    a = (mods[m + 1] - mods[m]) / (dpow[m + 1] - dpow[m])
    b = mods[m] - a * dpow[m]
    e = a * rho_c**p + b
    de = p * a * np.where(rho_c > 0, rho_c, 1.0) ** (p - 1.0)
    de = np.where(rho_c > 0, de, np.where(p == 1.0, a, 0.0))

    # pin knots exactly; rounding in a*rho^p + b is otherwise ~1 ulp off
    knot = np.searchsorted(dens, rho_c)
    hit = (knot < len(dens)) & (dens[np.minimum(knot, len(dens) - 1)] == rho_c)
    e = np.where(hit, mods[np.minimum(knot, len(dens) - 1)], e)

    de = np.where(low | high, 0.0, de)
    if rho.ndim == 0:
        return float(e), float(de)
    return e, de


def snap_to_materials(rho, mats: MaterialSet):
    """Project densities to the nearest material knot.

    Returns (snapped_density, material_index) for reporting discrete designs.
    """
    rho = np.asarray(rho, dtype=float)
    dens = np.asarray(mats.densities)
    idx = np.abs(rho[..., None] - dens).argmin(axis=-1)
    return dens[idx], idx


@dataclass
class DensityFilterKernel:
    """Sparse cone-weight averaging kernel: weight max(0, r_min - dist)."""

    r_min: float
    weights: sp.csr_matrix
    row_sums: np.ndarray = field(init=False)

    def __post_init__(self):
        self.row_sums = np.asarray(self.weights.sum(axis=1)).ravel()
        if np.any(self.row_sums <= 0):
            raise ValueError("every filter row must have positive total weight")

    @property
    def n_e(self) -> int:
        return self.weights.shape[0]


def build_density_filter(centroids: np.ndarray, r_min: float) -> DensityFilterKernel:
    """Assemble the kernel from element centroids and the filter radius."""
    centroids = np.asarray(centroids, dtype=float)
    if r_min <= 0:
        raise ValueError(f"filter radius must be positive, got {r_min}")
    n = len(centroids)
    tree = cKDTree(centroids)
    pairs = tree.query_pairs(r_min, output_type="ndarray")
    if len(pairs) == 0:
        logger.warning(
            "filter radius %.3g is below the closest centroid spacing; filter is the identity", r_min
        )
        return DensityFilterKernel(r_min=r_min, weights=sp.identity(n, format="csr") * r_min)
    d = np.linalg.norm(centroids[pairs[:, 0]] - centroids[pairs[:, 1]], axis=1)
    w = r_min - d
    rows = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([np.arange(n), pairs[:, 1], pairs[:, 0]])
    vals = np.concatenate([np.full(n, r_min), w, w])
    weights = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return DensityFilterKernel(r_min=r_min, weights=weights)


def density_filter_apply(rho: np.ndarray, kernel: DensityFilterKernel) -> np.ndarray:
    """Filtered density: convex average of neighbors within r_min."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (kernel.n_e,):
        raise ValueError(f"field has shape {rho.shape}, expected ({kernel.n_e},)")
    return (kernel.weights @ rho) / kernel.row_sums


def density_filter_chain(d_filtered: np.ndarray, kernel: DensityFilterKernel) -> np.ndarray:
    """Pull a gradient w.r.t. filtered densities back to raw densities."""
    d_filtered = np.asarray(d_filtered, dtype=float)
    if d_filtered.shape != (kernel.n_e,):
        raise ValueError(f"gradient has shape {d_filtered.shape}, expected ({kernel.n_e},)")
    return kernel.weights.T @ (d_filtered / kernel.row_sums)
