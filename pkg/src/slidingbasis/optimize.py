"""Sliding-window optimization over a spectrally ordered basis.

The outer loop keeps ``n_opt`` weights active at a time.  After each inner
solve the window advances by ``n_s`` columns toward higher-frequency basis
vectors (``n_s < n_opt`` so consecutive windows overlap).  A window result is
accepted only when it improves the incumbent objective by at least epsilon;
otherwise the incumbent weights are kept and the freshly exposed ``n_s``
weights stay zero.  The loop stops when the application-level convergence
criterion holds or ``s_max`` consecutive windows fail to improve.

The inner solver is sequential quadratic programming (scipy's SLSQP) behind
a narrow contract, so it can be swapped without touching the outer loop.
Gradients come from the problem itself when it provides them analytically,
and from logged forward differences otherwise, which keeps every analysis
call visible in the evaluation counters that the fixed-window baseline is
compared against.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import SolverError, SpectralFailureError

logger = logging.getLogger(__name__)

_BIG = 1e30


@dataclass
class SlidingConfig:
    """Tunables of the outer loop and its inner solver.

    n_s defaults to ceil(0.75 * n_opt), the overlap that trades objective
    quality against the number of windows needed to cover the basis.
    epsilon defaults to 1e-3 |f_init| measured at the first evaluation.
    """

    n_opt: int = 20
    n_s: int | None = None
    s_max: int = 2
    epsilon: float | None = None
    rng_seed: int = 0
    inner_max_iter: int = 100
    inner_ftol: float = 1e-10
    fd_step: float = 1e-6
    init_scale: float = 0.01
    converged_tol: float | None = None
    max_basis: int | None = None
    zero_first_window: bool = False

    def __post_init__(self):
        if self.n_s is None:
            self.n_s = math.ceil(0.75 * self.n_opt)
        if not 0 < self.n_s < self.n_opt:
            raise ValueError(f"need 0 < n_s < n_opt, got n_s={self.n_s}, n_opt={self.n_opt}")
        if self.s_max < 1:
            raise ValueError("s_max must be >= 1")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")


@dataclass
class EvalCounter:
    """Running count of analysis evaluations with an (index, value) history."""

    count: int = 0
    history: list = field(default_factory=list)

    def add(self, f: float):
        self.count += 1
        self.history.append((self.count, float(f)))

    def reset(self):
        self.count = 0
        self.history.clear()


@dataclass
class DesignProblem:
    """Black-box contract the optimizer consumes.

    ``objective`` and every entry of ``constraints`` map a weight vector of
    any explored length to a scalar; feasibility means g_i(w) <= 0.  They
    must be pure so that perturbed evaluations can run in any order.
    ``analytic_gradient``, when given, returns (df/dw, dg/dw) with dg/dw of
    shape (n_constraints, len(w)).  ``counter`` tallies underlying analysis
    runs; problem factories are responsible for incrementing it once per
    distinct evaluation.
    """

    objective: Callable[[np.ndarray], float]
    constraints: Sequence[Callable[[np.ndarray], float]] = ()
    analytic_gradient: Optional[Callable[[np.ndarray], tuple]] = None
    bounds: Optional[tuple] = None
    convergence_metric: Optional[Callable[[np.ndarray], float]] = None
    counter: EvalCounter = field(default_factory=EvalCounter)


def counted_problem(objective, constraints=(), **kwargs) -> DesignProblem:
    """Wrap plain callables so every objective call increments the counter."""
    counter = EvalCounter()

    def wrapped(w):
        f = objective(w)
        counter.add(f)
        return f

    return DesignProblem(objective=wrapped, constraints=tuple(constraints), counter=counter, **kwargs)


@dataclass
class SlideRecord:
    slide: int
    window_start: int
    accepted: bool
    f_before: float
    f_after: float
    inner_iterations: int
    evaluations: int
    seconds: float
    metric: float = math.nan


@dataclass
class SlideTrace:
    """Per-slide log of one optimization run."""

    records: list = field(default_factory=list)
    final_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total_seconds: float = 0.0
    stop_reason: str = ""
    converged: bool = False
    explored_k: int = 0
    total_evaluations: int = 0

    @property
    def accepted_objectives(self) -> np.ndarray:
        return np.array([r.f_after for r in self.records if r.accepted])

    @property
    def best_objective(self) -> float:
        acc = self.accepted_objectives
        return float(acc.min()) if len(acc) else math.inf


def total_explored_basis(n_opt: int, n_s: int, n_slides: int) -> int:
    """Highest basis count reached after n_slides window moves."""
    return n_opt + n_slides * n_s


def windows_to_cover(k: int, n_opt: int, n_s: int) -> int:
    """Number of complete window optimizations needed to reach k basis columns."""
    if k < n_opt or (k - n_opt) % n_s:
        raise ValueError(f"k={k} is not reachable from n_opt={n_opt} by steps of {n_s}")
    return (k - n_opt) // n_s + 1


def initialize_weights(n_opt: int, cfg: SlidingConfig, slide_index: int) -> np.ndarray:
    """Deterministic uniform draw in [-init_scale, init_scale] per (seed, slide)."""
    if cfg.init_scale == 0 or (slide_index == 0 and cfg.zero_first_window):
        return np.zeros(n_opt)
    rng = np.random.default_rng([cfg.rng_seed, slide_index])
    return rng.uniform(-cfg.init_scale, cfg.init_scale, n_opt)


def numerical_gradient(problem: DesignProblem, w: np.ndarray, cfg: SlidingConfig, active=None):
    """Forward-difference gradients of the objective and every constraint.

    One evaluation per active coordinate with step fd_step * max(1, |w_j|);
    a non-finite perturbed value is retried once at a tenth of the step.
    Returns (df, dg) restricted to the active coordinates (all by default).
    """
    w = np.asarray(w, dtype=float)
    if active is None:
        active = np.arange(len(w))
    f0 = problem.objective(w)
    g0 = np.array([g(w) for g in problem.constraints])
    if not np.isfinite(f0):
        raise SolverError("objective is non-finite at the expansion point")
    df = np.zeros(len(active))
    dg = np.zeros((len(g0), len(active)))
    for col, j in enumerate(active):
        h = cfg.fd_step * max(1.0, abs(w[j]))
        for attempt in range(2):
            wp = w.copy()
            wp[j] += h
            fp = problem.objective(wp)
            if np.isfinite(fp):
                break
            h /= 10.0
        else:
            raise SolverError(f"objective non-finite under perturbation of coordinate {j}")
        df[col] = (fp - f0) / h
        for i, g in enumerate(problem.constraints):
            dg[i, col] = (g(wp) - g0[i]) / h
    return df, dg


@dataclass
class InnerResult:
    weights: np.ndarray
    f: float
    f_init: float
    iterations: int
    success: bool
    message: str = ""


def inner_solve(problem: DesignProblem, w_init: np.ndarray, window: tuple, cfg: SlidingConfig) -> InnerResult:
    """Locally optimize the window coordinates of w_init under all constraints.

    Coordinates outside [window[0], window[1]) are bit-identical in the
    result.  Returns the best iterate found even when the subproblem stalls;
    ``success`` is False only on hard failure (non-finite everywhere or a
    solver exception).
    """
    w_init = np.asarray(w_init, dtype=float)
    lo, hi = window
    if not (0 <= lo < hi <= len(w_init)):
        raise ValueError(f"window {window} outside weight vector of length {len(w_init)}")
    active_idx = np.arange(lo, hi)
    frozen = w_init.copy()

    def embed(active):
        full = frozen.copy()
        full[active_idx] = active
        return full

    def fun(active):
        f = problem.objective(embed(active))
        return float(f) if np.isfinite(f) else _BIG

    grad_cache: dict = {}

    def gradients(active):
        key = active.tobytes()
        if key not in grad_cache:
            full = embed(active)
            if problem.analytic_gradient is not None:
                df_full, dg_full = problem.analytic_gradient(full)
                df = np.asarray(df_full)[active_idx]
                dg = np.asarray(dg_full).reshape(len(problem.constraints), -1)[:, active_idx] \
                    if len(problem.constraints) else np.zeros((0, len(active_idx)))
            else:
                df, dg = numerical_gradient(problem, full, cfg, active=active_idx)
            grad_cache[key] = (df, dg)
            if len(grad_cache) > 4:
                grad_cache.pop(next(iter(grad_cache)))
        return grad_cache[key]

    scipy_cons = []
    if problem.constraints:
        # scipy wants g >= 0 for feasibility, the library convention is g <= 0
        def cons_fun(active):
            full = embed(active)
            return -np.array([g(full) for g in problem.constraints])

        scipy_cons.append(
            {"type": "ineq", "fun": cons_fun, "jac": lambda a: -gradients(np.asarray(a))[1]}
        )

    bounds = None
    if problem.bounds is not None:
        b_lo = np.broadcast_to(np.asarray(problem.bounds[0], dtype=float), (len(w_init),))
        b_hi = np.broadcast_to(np.asarray(problem.bounds[1], dtype=float), (len(w_init),))
        bounds = list(zip(b_lo[active_idx], b_hi[active_idx]))

    f_init = fun(w_init[active_idx])
    ftol = max(cfg.inner_ftol, cfg.inner_ftol * abs(f_init))
    try:
        res = minimize(
            fun,
            x0=w_init[active_idx].copy(),
            jac=lambda a: gradients(np.asarray(a))[0],
            bounds=bounds,
            constraints=scipy_cons,
            method="SLSQP",
            options={"maxiter": cfg.inner_max_iter, "ftol": ftol},
        )
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return InnerResult(w_init.copy(), math.inf, f_init, 0, False, f"inner solver failed: {exc}")
    w_out = embed(np.asarray(res.x, dtype=float))
    f_out = float(res.fun)
    if not np.isfinite(f_out) or f_out >= _BIG:
        return InnerResult(w_init.copy(), math.inf, f_init, int(res.nit), False, "non-finite objective")
    if f_out > f_init:  # keep the better of start/end; SLSQP can overshoot on maxiter
        w_out, f_out = w_init.copy(), f_init
    return InnerResult(w_out, f_out, f_init, int(res.nit), True, res.message)


def slide_optimize(problem: DesignProblem, basis_provider, cfg: SlidingConfig):
    """Run the sliding-window loop; returns (weights, SlideTrace).

    ``basis_provider.get(k)`` must supply at least n_opt columns and keep
    already-issued columns unchanged when extended.
    """
    t_start = time.perf_counter()
    trace = SlideTrace()
    w = np.zeros(0)
    f_best = math.inf
    it_s = 0
    i_sb = 0
    slide_idx = 0
    epsilon = cfg.epsilon
    max_k = basis_provider.max_k if cfg.max_basis is None else min(cfg.max_basis, basis_provider.max_k)

    while True:
        k_end = i_sb + cfg.n_opt
        if k_end > max_k:
            trace.stop_reason = "basis-exhausted"
            break
        try:
            basis_provider.get(k_end)
        except SpectralFailureError as exc:
            logger.warning("basis extension to %d failed: %s", k_end, exc)
            trace.stop_reason = "basis-failure"
            break

        w_kept = np.concatenate([w, np.zeros(k_end - len(w))])
        w_init = w_kept.copy()
        w_init[i_sb:k_end] = initialize_weights(cfg.n_opt, cfg, slide_idx)

        evals_before = problem.counter.count
        t0 = time.perf_counter()
        result = inner_solve(problem, w_init, (i_sb, k_end), cfg)
        seconds = time.perf_counter() - t0

        if epsilon is None:
            first_f = problem.counter.history[0][1] if problem.counter.history else result.f_init
            epsilon = max(1e-3 * abs(first_f), 1e-12)
            logger.debug("auto epsilon = %.3e", epsilon)

        accepted = result.success and np.isfinite(result.f) and (f_best - result.f >= epsilon)
        f_before = f_best
        if accepted:
            w = result.weights
            f_best = result.f
            it_s = 0
        else:
            w = w_kept
            it_s += 1

        metric = math.nan
        if problem.convergence_metric is not None:
            metric = float(problem.convergence_metric(w))
        trace.records.append(
            SlideRecord(
                slide=slide_idx,
                window_start=i_sb,
                accepted=accepted,
                f_before=f_before,
                f_after=result.f if accepted else f_best,
                inner_iterations=result.iterations,
                evaluations=problem.counter.count - evals_before,
                seconds=seconds,
                metric=metric,
            )
        )
        logger.info(
            "slide %d window [%d, %d) %s f=%.6g metric=%.4g",
            slide_idx, i_sb, k_end, "accepted" if accepted else "rejected",
            f_best, metric,
        )

        i_sb += cfg.n_s
        slide_idx += 1
        if cfg.converged_tol is not None and np.isfinite(metric) and metric <= cfg.converged_tol:
            trace.converged = True
            trace.stop_reason = "converged"
            break
        if it_s >= cfg.s_max:
            trace.stop_reason = "stalled"
            break

    trace.final_weights = w
    trace.explored_k = len(w)
    trace.total_seconds = time.perf_counter() - t_start
    trace.total_evaluations = problem.counter.count
    return w, trace


def fixed_basis_optimize(problem: DesignProblem, basis_provider, k: int, cfg: SlidingConfig):
    """Single inner solve over all k weights (the fixed-window baseline)."""
    t_start = time.perf_counter()
    basis_provider.get(k)
    w_init = initialize_weights(k, cfg, 0)
    evals_before = problem.counter.count
    result = inner_solve(problem, w_init, (0, k), cfg)
    seconds = time.perf_counter() - t_start
    w = result.weights if result.success else w_init
    metric = math.nan
    if problem.convergence_metric is not None:
        metric = float(problem.convergence_metric(w))
    trace = SlideTrace(
        records=[
            SlideRecord(
                slide=0,
                window_start=0,
                accepted=result.success,
                f_before=math.inf,
                f_after=result.f,
                inner_iterations=result.iterations,
                evaluations=problem.counter.count - evals_before,
                seconds=seconds,
                metric=metric,
            )
        ],
        final_weights=w,
        total_seconds=seconds,
        stop_reason="fixed",
        converged=bool(
            cfg.converged_tol is not None and np.isfinite(metric) and metric <= cfg.converged_tol
        ),
        explored_k=k,
        total_evaluations=problem.counter.count,
    )
    return w, trace
