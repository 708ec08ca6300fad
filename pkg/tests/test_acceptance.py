"""Acceptance suite: every release criterion at its pinned tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS/FAIL
line per criterion. The benchmark-backed criteria share one seeded
100-map sweep per solver.
"""

import time

import numpy as np
import pytest
from scipy.interpolate import BSpline as ScipyBSpline
from scipy.optimize import linprog

from reboundplan.bench import BenchmarkSpec, run_benchmark
from reboundplan.bspline import UniformBSpline
from reboundplan.config import Config, PenaltyConfig, PlannerConfig, SolverOptions
from reboundplan.objective import (
    FitReference,
    PairArrays,
    collision,
    collision_scalar,
    feasibility,
    fitness,
    limit_scalar,
    smoothness,
    total_rebound_cost,
    total_refine_cost,
)
from reboundplan.planner import sample_curve
from reboundplan.rebound import ControlPointCtx, PVPair
from reboundplan.refine import limits_exceed_ratio
from reboundplan.solver import SolveReport, bb_minimize, lbfgs_minimize, two_loop_direction

REFERENCE_SEED = 1000
REFERENCE_RUNS = 100


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} - {name}: {detail}")
    assert ok, f"{name}: {detail}"


# -- shared benchmark sweeps -------------------------------------------------


@pytest.fixture(scope="module")
def lbfgs_sweep():
    spec = BenchmarkSpec(
        runs=REFERENCE_RUNS, seed=REFERENCE_SEED, solver="lbfgs",
        keep_trajectories=True, record_timing=True,
    )
    return run_benchmark(spec)


@pytest.fixture(scope="module")
def bb_sweep():
    spec = BenchmarkSpec(
        runs=REFERENCE_RUNS, seed=REFERENCE_SEED, solver="bb",
        keep_trajectories=False, record_timing=False,
    )
    return run_benchmark(spec)


# -- criterion: gradient correctness ------------------------------------------


def _fd_grad(fun, q, h=1e-6):
    g = np.zeros_like(q)
    for i in range(q.shape[0]):
        for k in range(q.shape[1]):
            qp, qm = q.copy(), q.copy()
            qp[i, k] += h
            qm[i, k] -= h
            g[i, k] = (fun(qp) - fun(qm)) / (2 * h)
    return g


def _rel_err(analytic, numeric):
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1.0))


def test_gradient_correctness():
    rng = np.random.default_rng(77)
    cfg = PenaltyConfig()
    t0 = time.perf_counter()
    worst = 0.0
    checks = 0
    for trial in range(20):
        n = int(rng.integers(7, 11))
        q = np.cumsum(rng.normal(scale=0.5, size=(n, 3)), axis=0)
        dt = float(rng.uniform(0.15, 0.5))
        pts = [ControlPointCtx(qi) for qi in q]
        for ctx in pts:
            for _ in range(int(rng.integers(0, 3))):
                p = ctx.position + rng.normal(scale=0.3, size=3)
                v = rng.normal(size=3)
                v /= np.linalg.norm(v)
                ctx.pairs.append(PVPair(p, v))
        pairs = PairArrays.from_points(pts)
        safe = UniformBSpline(np.cumsum(rng.normal(scale=0.3, size=(n, 3)), axis=0), dt)
        ref = FitReference.build(safe, dt * float(rng.uniform(1.1, 2.0)))
        fixed = np.zeros(n, dtype=bool)
        fixed[:3] = fixed[-3:] = True

        terms = [
            ("smoothness", lambda x: smoothness(x, dt).value,
             smoothness(q, dt).grad),
            ("collision", lambda x: collision(x, pairs, cfg.s_f).value,
             collision(q, pairs, cfg.s_f).grad),
            ("feasibility", lambda x: feasibility(x, dt, cfg).value,
             feasibility(q, dt, cfg).grad),
            ("fitness", lambda x: fitness(x, ref, cfg).value,
             fitness(q, ref, cfg).grad),
            ("combined", lambda x: total_rebound_cost(x, dt, pairs, cfg).value,
             total_rebound_cost(q, dt, pairs, cfg).grad),
            ("refine", lambda x: total_refine_cost(x, dt, ref, cfg).value,
             total_refine_cost(q, dt, ref, cfg).grad),
        ]
        for name, fun, analytic in terms:
            err = _rel_err(analytic, _fd_grad(fun, q))
            worst = max(worst, err)
            checks += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 10.0 and checks >= 100
    _report(
        "gradient correctness",
        ok,
        f"{checks} random states, worst relative error {worst:.2e} "
        f"(< 1e-5), runtime {elapsed:.1f}s (< 10s)",
    )


# -- criterion: branch-point smoothness ---------------------------------------


def _branch_probe(fun, x0, side, h=1e-2):
    xs = x0 + side * h * np.arange(1, 5)
    coef = np.polyfit(xs - x0, fun(xs), 3)
    p = np.poly1d(coef)
    return np.array([p(0.0), p.deriv(1)(0.0), p.deriv(2)(0.0)])


def test_penalty_branch_smoothness():
    cfg = PenaltyConfig()
    worst = 0.0
    s_f = cfg.s_f
    col = lambda cs: collision_scalar(cs, s_f)[0]
    for c0 in (0.0, s_f):
        gap = np.abs(_branch_probe(col, c0, -1) - _branch_probe(col, c0, +1))
        worst = max(worst, float(gap.max()))
    for c_m in (cfg.v_max, cfg.a_max, cfg.j_max):
        lim = lambda xs: limit_scalar(xs, c_m, cfg.lambda_elastic, cfg.cj_ratio)[0]
        thr = cfg.lambda_elastic * c_m
        c_j = cfg.cj_ratio * c_m
        for x0 in (-c_j, -thr, thr, c_j):
            gap = np.abs(_branch_probe(lim, x0, -1) - _branch_probe(lim, x0, +1))
            worst = max(worst, float(gap.max()))
    _report(
        "branch-point smoothness",
        worst < 1e-9,
        f"worst value/slope/curvature mismatch {worst:.2e} (< 1e-9)",
    )


# -- criterion: B-spline correctness ------------------------------------------


def test_bspline_correctness():
    rng = np.random.default_rng(5)
    sp = UniformBSpline(rng.normal(scale=2.0, size=(12, 3)), 0.35)
    knots = sp.t0 + (np.arange(sp.n_ctrl + sp.degree + 1) - sp.degree) * sp.dt
    oracle = ScipyBSpline(knots, sp.ctrl_pts, sp.degree)
    lo, hi = sp.domain()
    ts = rng.uniform(lo, hi, size=1000)
    worst = 0.0
    for k in (1, 2, 3):
        ours = sp.derivative_ctrl_points(k).evaluate(ts)
        ref = oracle.derivative(k)(ts)
        worst = max(worst, float(np.max(np.abs(ours - ref))))

    inside = 0
    for t in rng.uniform(lo, hi, size=1000):
        i0, w = sp.basis_row(t)
        hull = sp.ctrl_pts[i0 : i0 + sp.degree + 1]
        point = sp.evaluate(t)
        a_eq = np.vstack([hull.T, np.ones(len(hull))])
        b_eq = np.concatenate([point, [1.0]])
        res = linprog(np.zeros(len(hull)), A_eq=a_eq, b_eq=b_eq,
                      bounds=[(0, None)] * len(hull), method="highs")
        if res.success:
            inside += 1
        else:
            lam, *_ = np.linalg.lstsq(a_eq, b_eq, rcond=None)
            if np.linalg.norm(a_eq @ np.clip(lam, 0, None) - b_eq) < 1e-9:
                inside += 1
    ok = worst < 1e-9 and inside == 1000
    _report(
        "B-spline correctness",
        ok,
        f"derivative curves vs independent basis: max |diff| {worst:.2e} (< 1e-9); "
        f"convex hull membership {inside}/1000",
    )


# -- criterion: solver ---------------------------------------------------------


def test_solver_two_loop_and_quadratic():
    rng = np.random.default_rng(9)
    worst = 0.0
    for n, m in [(4, 2), (7, 3), (10, 5)]:
        M = rng.normal(size=(n, n))
        A = M @ M.T / n + np.eye(n)
        s_list = [rng.normal(size=n) for _ in range(m)]
        y_list = [A @ s for s in s_list]
        rho = [1.0 / np.dot(s, y) for s, y in zip(s_list, y_list)]
        gamma = float(np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1]))
        H = gamma * np.eye(n)
        for s, y, r in zip(s_list, y_list, rho):
            V = np.eye(n) - r * np.outer(y, s)
            H = V.T @ H @ V + r * np.outer(s, s)
        grad = rng.normal(size=n)
        ours = two_loop_direction(s_list, y_list, rho, gamma, grad)
        worst = max(worst, float(np.max(np.abs(ours - H @ grad))))

    quad_ok = True
    detail_iters = []
    for trial in range(5):
        M = rng.normal(size=(5, 5))
        A = M @ M.T + 0.5 * np.eye(5)
        b = rng.normal(size=5)
        fun = lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b)
        # a near-zero curvature parameter makes every accepted step the
        # interpolated 1-D minimizer, giving conjugate-direction behavior
        opts = SolverOptions(memory=50, wolfe_c1=1e-7, wolfe_c2=1e-6,
                             grad_tolerance=1e-10, rel_f_tolerance=1e-16)
        rep = lbfgs_minimize(fun, rng.normal(size=5), opts)
        x_star = np.linalg.solve(A, b)
        detail_iters.append(rep.iterations)
        if rep.iterations > 6 or np.linalg.norm(rep.x_final - x_star, np.inf) > 1e-8:
            quad_ok = False
    ok = worst < 1e-10 and quad_ok
    _report(
        "solver recursion and quadratic termination",
        ok,
        f"two-loop vs dense update max |diff| {worst:.2e} (< 1e-10); "
        f"5-dim convex quadratic iterations {detail_iters} (<= 6 to 1e-8)",
    )


def _rebound_evals_per_plan(result):
    vals = []
    for outcomes, row in zip(result.outcomes, result.rows):
        if not row.success:
            continue
        for o in outcomes:
            if o.succeeded:
                vals.append(o.stats.rebound_evals)
    return float(np.mean(vals))


def test_solver_benchmark_comparison(lbfgs_sweep, bb_sweep):
    l_evals = _rebound_evals_per_plan(lbfgs_sweep)
    b_evals = _rebound_evals_per_plan(bb_sweep)
    l_rate = lbfgs_sweep.success_rate
    b_rate = bb_sweep.success_rate
    ok = l_evals < b_evals and l_rate >= b_rate - 0.05
    _report(
        "solver benchmark comparison",
        ok,
        f"objective evaluations per plan: L-BFGS {l_evals:.1f} < BB {b_evals:.1f}; "
        f"success rates {l_rate:.2f} vs {b_rate:.2f} (within 0.05)",
    )


# -- criterion: planner success ------------------------------------------------


def test_planner_success_rate(lbfgs_sweep):
    rate = lbfgs_sweep.success_rate
    audited = 0
    feasible = True
    cfg = lbfgs_sweep.spec.config
    for trajs in lbfgs_sweep.trajectories:
        for traj in trajs:
            audited += 1
            if limits_exceed_ratio(traj, cfg.penalty) > 1.0 + 1e-6:
                feasible = False
    ok = rate >= 0.80 and feasible and audited > 0
    _report(
        "planner success rate",
        ok,
        f"success {rate:.2f} over {REFERENCE_RUNS} seeded maps (>= 0.80); "
        f"{audited} emitted trajectories all within limits",
    )


# -- criterion: feasibility after refinement -----------------------------------


def test_feasibility_with_injected_violations():
    cfg = Config()
    cfg.planner = PlannerConfig(init_dt_factor=0.7)
    spec = BenchmarkSpec(runs=40, seed=4200, config=cfg,
                         keep_trajectories=True, record_timing=False)
    result = run_benchmark(spec)
    pen = cfg.penalty
    worst_ratio = 0.0
    worst_overshoot = 0.0
    refined_seen = 0
    for outcomes, trajs, row in zip(result.outcomes, result.trajectories, result.rows):
        if not row.success:
            continue
        refined_seen += sum(o.status in ("refined", "fallback") for o in outcomes)
        for traj in trajs:
            worst_ratio = max(worst_ratio, limits_exceed_ratio(traj, pen))
            for order, limit in ((1, pen.v_max), (2, pen.a_max), (3, pen.j_max)):
                pts = traj.derivative_ctrl_points(order).ctrl_pts
                worst_overshoot = max(
                    worst_overshoot, float(np.max(np.abs(pts))) - limit
                )
    ok = (
        result.success_rate > 0.5
        and refined_seen > 0
        and worst_overshoot <= 1e-6
        and worst_ratio <= 1.0 + 1e-6
    )
    _report(
        "feasibility after refinement",
        ok,
        f"injected time squeeze: {refined_seen} refined plans across "
        f"{int(result.success_rate * spec.runs)} successful runs; worst limit "
        f"overshoot {worst_overshoot:.2e} (<= 1e-6), worst recomputed ratio "
        f"{worst_ratio - 1.0:.2e} above 1 (<= 1e-6)",
    )


# -- criterion: timing -----------------------------------------------------------


def test_optimize_timing(lbfgs_sweep):
    times = [r.optimize_ms for r in lbfgs_sweep.rows if r.success]
    mean_ms = float(np.mean(times))
    p90 = float(np.percentile(times, 90))
    ok = mean_ms < 50.0
    _report(
        "optimize timing",
        ok,
        f"mean optimize {mean_ms:.1f} ms per plan (gate < 50 ms, target < 10 ms), "
        f"p90 {p90:.1f} ms, control points ~25",
    )


# -- criterion: safety audit -----------------------------------------------------


def test_safety_audit_dense_oracle(lbfgs_sweep):
    cfg = lbfgs_sweep.spec.config
    violations = 0
    audited = 0
    for trajs, grid in zip(lbfgs_sweep.trajectories, lbfgs_sweep.grids):
        for traj in trajs:
            audited += 1
            dense = sample_curve(traj, grid.resolution / 20.0)
            if grid.clearance_violated(dense, cfg.planner.pipe_radius):
                violations += 1
    ok = violations == 0 and audited > 0
    _report(
        "safety audit",
        ok,
        f"{audited} emitted trajectories re-checked at 10x sampling density: "
        f"{violations} violations (must be 0)",
    )


# -- criterion: determinism -------------------------------------------------------


def test_benchmark_determinism():
    spec = BenchmarkSpec(runs=8, seed=31337, record_timing=False)
    csv1 = run_benchmark(spec).to_csv()
    csv2 = run_benchmark(spec).to_csv()
    ok = csv1 == csv2
    _report(
        "benchmark determinism",
        ok,
        f"identical seeds produce byte-identical CSV ({len(csv1)} bytes)"
        if ok else "CSV bytes differ between identical runs",
    )
