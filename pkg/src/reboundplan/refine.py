"""Time reallocation and anisotropic re-fitting of the safe trajectory.

The deformation stage allocates time aggressively, so its output often
violates derivative limits. Because the velocity/acceleration/jerk
control points scale with 1/dt, 1/dt^2, 1/dt^3, stretching the knot
interval by the worst per-axis exceeding ratio (with the matching root
per derivative order) makes the same control polygon exactly feasible.
A fresh curve is then fitted on the stretched clock under the original
boundary states and re-optimized for smoothness, feasibility, and
anisotropic closeness to the safe shape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .bspline import UniformBSpline, boundary_constrained_lsq_fit
from .config import Config
from .objective import FitReference, total_refine_cost
from .solver import lbfgs_minimize

log = logging.getLogger(__name__)

_FEASIBLE_TOL = 1e-9


@dataclass(frozen=True)
class ReallocationResult:
    ratio: float    # >= 1
    dt_new: float   # ratio * dt


@dataclass
class RefineResult:
    trajectory: UniformBSpline
    status: str          # unchanged | refined | stretched
    ratio: float
    rounds: int
    function_evaluations: int


def limits_exceed_ratio(spline: UniformBSpline, cfg) -> float:
    """Worst per-axis ratio max(|V|/v_max, sqrt(|A|/a_max), cbrt(|J|/j_max), 1)
    over the derivative control points."""
    ratios = [1.0]
    for order, limit, power in ((1, cfg.v_max, 1.0), (2, cfg.a_max, 0.5), (3, cfg.j_max, 1 / 3)):
        if spline.degree < order or spline.n_ctrl - order < 1:
            continue
        deriv = spline.derivative_ctrl_points(order)
        worst = float(np.max(np.abs(deriv.ctrl_pts))) / limit
        ratios.append(worst**power)
    return float(max(ratios))


def reallocate_time(spline: UniformBSpline, ratio: float) -> ReallocationResult:
    if ratio < 1.0:
        raise ValueError(f"exceeding ratio must be >= 1, got {ratio}")
    return ReallocationResult(ratio, ratio * spline.dt)


def _boundary_states(spline: UniformBSpline) -> dict:
    lo, hi = spline.domain()
    return {
        "start_pos": spline.evaluate(lo),
        "start_vel": spline.evaluate(lo, 1),
        "start_acc": spline.evaluate(lo, 2),
        "end_pos": spline.evaluate(hi),
        "end_vel": spline.evaluate(hi, 1),
        "end_acc": spline.evaluate(hi, 2),
    }


def fit_stretched_init(safe: UniformBSpline, dt_new: float) -> UniformBSpline:
    """Least-squares initialization of the re-timed curve: same control
    point count, identical shape samples, original boundary states."""
    n_samples = 2 * safe.n_ctrl
    alphas = np.linspace(0.0, 1.0, n_samples)
    lo, hi = safe.domain()
    positions = safe.evaluate(lo + alphas * (hi - lo), 0)
    duration_new = (safe.n_ctrl - safe.degree) * dt_new
    samples = [(safe.t0 + a * duration_new, p) for a, p in zip(alphas, positions)]
    return boundary_constrained_lsq_fit(
        samples, safe.n_ctrl, dt_new, _boundary_states(safe), safe.degree, safe.t0
    )


def refine_trajectory(safe: UniformBSpline, cfg: Config) -> RefineResult:
    """Full refinement: reallocate time, re-fit, optimize, audit.

    Repeats the stretch-and-refit round while the optimized curve still
    exceeds limits (each round starts from the audited ratio), and falls
    back to the exactly stretched safe curve when the rounds run out:
    that curve keeps the safe shape and is feasible by construction.
    """
    pen = cfg.penalty
    ratio = limits_exceed_ratio(safe, pen)
    if ratio <= 1.0 + _FEASIBLE_TOL:
        return RefineResult(safe, "unchanged", ratio, 0, 0)

    degree = safe.degree
    fixed = np.zeros(safe.n_ctrl, dtype=bool)
    fixed[:degree] = fixed[-degree:] = True
    free = ~fixed
    evals = 0
    dt_new = safe.dt
    current = safe
    # the constrained stretch fit already starts near-optimal; a short
    # polish is all the smoothing pass needs
    solver_opts = replace(cfg.solver, max_iterations=min(cfg.solver.max_iterations, 30))
    for rounds in range(1, cfg.planner.max_refine_rounds + 1):
        dt_new = limits_exceed_ratio(current, pen) * dt_new if rounds > 1 else ratio * safe.dt
        try:
            init = fit_stretched_init(safe, dt_new)
        except np.linalg.LinAlgError as exc:
            log.warning("refit initialization failed: %s", exc)
            break
        ref = FitReference.build(safe, dt_new)
        q = init.ctrl_pts.copy()

        def objective(x):
            q[free] = x.reshape(-1, 3)
            res = total_refine_cost(q, dt_new, ref, pen, fixed)
            return res.value, res.grad[free].ravel()

        report = lbfgs_minimize(objective, init.ctrl_pts[free].ravel(), solver_opts)
        evals += report.function_evaluations
        q[free] = report.x_final.reshape(-1, 3)
        optimized = UniformBSpline(q.copy(), dt_new, safe.t0, degree)
        # the line search is monotone, so a budget-capped solve still ends
        # no worse than the constrained fit it started from
        candidate = init if report.status == "non_finite" else optimized
        if not report.converged:
            log.debug("refine optimization ended with status=%s", report.status)
        # tight tolerance: the audited bound downstream is absolute in the
        # physical limits, so the ratio residual must stay well below it
        if limits_exceed_ratio(candidate, pen) <= 1.0 + 1e-7:
            return RefineResult(candidate, "refined", ratio, rounds, evals)
        current = candidate

    # guaranteed-feasible fallback: identical shape on the stretched clock
    stretched = safe.with_dt(limits_exceed_ratio(safe, pen) * safe.dt)
    return RefineResult(stretched, "stretched", ratio, cfg.planner.max_refine_rounds, evals)
