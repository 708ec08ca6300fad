"""Random-map benchmark harness and trajectory metrics.

Maps are forests of vertical cylinders dropped by a homogeneous Poisson
process at a requested ground density, with clearance discs kept free
around the start and goal. Each run flies a full receding-horizon
mission (plan, execute a knot-aligned slice, replan) and reports flight
time, path length, jerk energy, solver effort, and timing.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .bspline import UniformBSpline
from .config import Config
from .gridmap import OccupancyGrid, build_grid
from .planner import PlanOutcome, RobotState, plan

log = logging.getLogger(__name__)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)


@dataclass
class BenchmarkSpec:
    runs: int = 100
    density: float = 0.15           # obstacles per m^2 of ground area
    seed: int = 0
    arena: tuple = (20.0, 10.0, 3.0)
    resolution: float = 0.1
    start: tuple = (2.5, 5.0, 1.5)
    goal: tuple = (17.5, 5.0, 1.5)
    solver: str = "lbfgs"
    config: Config = field(default_factory=Config)
    record_timing: bool = True      # wall-clock column; disable for byte-stable CSV
    keep_trajectories: bool = False
    max_plans: int = 60
    exec_fraction: float = 0.5      # part of each trajectory flown before replanning
    arrival_tolerance: float = 0.25


@dataclass
class RunMetrics:
    seed: int
    success: bool
    flight_time: float = 0.0
    length: float = 0.0
    energy: float = 0.0
    optimize_ms: float = 0.0        # mean per plan call
    function_evaluations: float = 0.0  # mean per plan call
    v_avg: float = 0.0
    v_max: float = 0.0


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    rows: list[RunMetrics]
    outcomes: list[list[PlanOutcome]]         # per run, every emitted outcome
    trajectories: list[list[UniformBSpline]]  # kept only on request
    grids: list[OccupancyGrid]

    @property
    def success_rate(self) -> float:
        return sum(r.success for r in self.rows) / max(len(self.rows), 1)

    def mean_function_evaluations(self) -> float:
        vals = [r.function_evaluations for r in self.rows if r.success]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self) -> str:
        return format_csv(self.spec, self.rows)


def sample_cylinders(spec: BenchmarkSpec, seed: int | None = None):
    """Poisson forest draw: list of (cx, cy, radius) with the start/goal
    clearance discs kept free."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    ax, ay, az = spec.arena
    cfg = spec.config.planner
    clear = 0.5
    for anchor in (spec.start, spec.goal):
        if not (clear <= anchor[0] <= ax - clear and clear <= anchor[1] <= ay - clear):
            raise ValueError("start/goal clearance disc does not fit the arena")
    count = int(rng.poisson(spec.density * ax * ay))
    cylinders = []
    for _ in range(count):
        cx = float(rng.uniform(0.0, ax))
        cy = float(rng.uniform(0.0, ay))
        radius = float(rng.uniform(0.1, 0.4))
        keep_out = clear + cfg.inflation_radius + radius + spec.resolution
        if _dist2d((cx, cy), spec.start) < keep_out or _dist2d((cx, cy), spec.goal) < keep_out:
            continue
        cylinders.append((cx, cy, radius))
    return cylinders


def gen_random_map(spec: BenchmarkSpec, seed: int | None = None):
    """Seeded cylinder forest; returns (grid, obstacle boxes)."""
    ax, ay, az = spec.arena
    res = spec.resolution
    boxes = []
    for cx, cy, radius in sample_cylinders(spec, seed):
        boxes.extend(_cylinder_boxes(cx, cy, radius, az, res))
    dims = (int(round(ax / res)), int(round(ay / res)), int(round(az / res)))
    grid = build_grid(
        boxes, res, (0.0, 0.0, 0.0), dims, spec.config.planner.inflation_radius
    )
    return grid, boxes


def _dist2d(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _cylinder_boxes(cx: float, cy: float, radius: float, height: float, res: float):
    """Axis-aligned strips approximating a vertical cylinder's disc."""
    boxes = []
    n = max(int(np.ceil(2.0 * radius / res)), 1)
    for i in range(n):
        x0 = cx - radius + i * res
        x1 = min(x0 + res, cx + radius)
        xm = 0.5 * (x0 + x1)
        half = np.sqrt(max(radius**2 - (xm - cx) ** 2, 0.0))
        if half <= 0.0:
            continue
        boxes.append(("box", [x0, cy - half, 0.0], [x1, cy + half, height]))
    return boxes


# -- trajectory metrics -----------------------------------------------------


def _span_pieces(spline: UniformBSpline, ta: float, tb: float):
    """(lo, hi) sub-intervals of [ta, tb] split at knot boundaries."""
    lo, hi = spline.domain()
    ta, tb = max(ta, lo), min(tb, hi)
    if tb <= ta:
        return
    edges = [ta]
    k = int(np.ceil((ta - lo) / spline.dt - 1e-12))
    while lo + k * spline.dt < tb - 1e-12:
        t = lo + k * spline.dt
        if t > ta + 1e-12:
            edges.append(t)
        k += 1
    edges.append(tb)
    for a, b in zip(edges[:-1], edges[1:]):
        yield a, b


def energy_between(spline: UniformBSpline, ta: float, tb: float, subdiv: int = 8) -> float:
    """Integral of squared jerk by midpoint quadrature on knot-aligned pieces."""
    if spline.degree < 3:
        return 0.0
    total = 0.0
    for a, b in _span_pieces(spline, ta, tb):
        h = (b - a) / subdiv
        mids = a + (np.arange(subdiv) + 0.5) * h
        jerks = spline.evaluate(mids, 3)
        total += float(np.sum(jerks * jerks)) * h
    return total


def length_between(spline: UniformBSpline, ta: float, tb: float) -> float:
    """Arc length by Gauss-Legendre quadrature per knot-aligned piece."""
    total = 0.0
    for a, b in _span_pieces(spline, ta, tb):
        half = 0.5 * (b - a)
        ts = 0.5 * (a + b) + half * _GAUSS_X
        speeds = np.linalg.norm(spline.evaluate(ts, 1), axis=1)
        total += half * float(np.dot(_GAUSS_W, speeds))
    return total


def speed_samples(spline: UniformBSpline, ta: float, tb: float, rate: float = 100.0):
    n = max(int(np.ceil((tb - ta) * rate)), 2)
    ts = np.linspace(ta, tb, n)
    return np.linalg.norm(spline.evaluate(ts, 1), axis=1)


def metrics(spline: UniformBSpline) -> RunMetrics:
    """Whole-trajectory metrics (seed/success left for the caller)."""
    lo, hi = spline.domain()
    speeds = speed_samples(spline, lo, hi)
    return RunMetrics(
        seed=-1,
        success=True,
        flight_time=hi - lo,
        length=length_between(spline, lo, hi),
        energy=energy_between(spline, lo, hi),
        v_avg=float(np.mean(speeds)),
        v_max=float(np.max(speeds)),
    )


# -- mission execution ------------------------------------------------------


def fly_mission(grid: OccupancyGrid, spec: BenchmarkSpec, run_seed: int):
    """Receding-horizon flight from start to goal on one map.

    Returns (RunMetrics, outcomes, trajectories). Executes a knot-aligned
    slice of every plan so each replan splices seamlessly.
    """
    cfg = spec.config
    goal = np.asarray(spec.goal, dtype=float)
    state = RobotState(np.asarray(spec.start, dtype=float))
    prev: PlanOutcome | None = None
    outcomes: list[PlanOutcome] = []
    trajectories: list[UniformBSpline] = []
    t_flight = length = energy = 0.0
    speeds: list[np.ndarray] = []
    reached = False

    for _ in range(spec.max_plans):
        outcome = plan(state, goal, grid, cfg, prev=prev, solver=spec.solver)
        outcomes.append(outcome)
        if not outcome.succeeded:
            break
        traj = outcome.trajectory
        trajectories.append(traj)
        lo, hi = traj.domain()
        ends_at_goal = np.linalg.norm(traj.evaluate(hi) - goal) <= spec.arrival_tolerance
        if ends_at_goal:
            t_exec = hi
        else:
            spans = traj.n_ctrl - traj.degree
            k = min(max(int(round(spans * spec.exec_fraction)), 1), spans)
            t_exec = lo + k * traj.dt
        t_flight += t_exec - lo
        length += length_between(traj, lo, t_exec)
        energy += energy_between(traj, lo, t_exec)
        speeds.append(speed_samples(traj, lo, t_exec))
        state = RobotState(
            traj.evaluate(t_exec),
            traj.evaluate(t_exec, 1),
            traj.evaluate(t_exec, 2),
        )
        prev = outcome
        if ends_at_goal:
            reached = True
            break
        if np.linalg.norm(state.position - goal) <= spec.arrival_tolerance:
            reached = True
            break

    n_plans = max(len(outcomes), 1)
    opt_ms = float(np.mean([o.stats.optimize_ms for o in outcomes])) if outcomes else 0.0
    evals = float(np.mean([o.stats.function_evaluations for o in outcomes])) if outcomes else 0.0
    all_speeds = np.concatenate(speeds) if speeds else np.zeros(1)
    row = RunMetrics(
        seed=run_seed,
        success=reached and all(o.succeeded for o in outcomes),
        flight_time=t_flight,
        length=length,
        energy=energy,
        optimize_ms=opt_ms if spec.record_timing else 0.0,
        function_evaluations=evals,
        v_avg=float(np.mean(all_speeds)),
        v_max=float(np.max(all_speeds)),
    )
    return row, outcomes, trajectories


def run_benchmark(spec: BenchmarkSpec) -> BenchmarkResult:
    """Seeded benchmark sweep; identical seeds produce identical maps and
    missions regardless of the solver choice."""
    rows, all_outcomes, all_trajs, grids = [], [], [], []
    for i in range(spec.runs):
        run_seed = spec.seed + i
        grid, _ = gen_random_map(spec, run_seed)
        row, outcomes, trajs = fly_mission(grid, spec, run_seed)
        rows.append(row)
        all_outcomes.append(outcomes)
        all_trajs.append(trajs if spec.keep_trajectories else [])
        if spec.keep_trajectories:
            grids.append(grid)
        if not row.success:
            log.info("run %d failed (%d plans)", run_seed, len(outcomes))
    return BenchmarkResult(spec, rows, all_outcomes, all_trajs, grids)


CSV_HEADER = "seed,success,t_flight,length,energy,opt_ms,func_evals,v_avg,v_max"


def format_csv(spec: BenchmarkSpec, rows: list[RunMetrics]) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for r in rows:
        out.write(
            f"{r.seed},{int(r.success)},{r.flight_time:.6f},{r.length:.6f},"
            f"{r.energy:.6f},{r.optimize_ms:.3f},{r.function_evaluations:.2f},"
            f"{r.v_avg:.6f},{r.v_max:.6f}\n"
        )
    ok = [r for r in rows if r.success]
    rate = len(ok) / max(len(rows), 1)

    def agg(fun, attr, default=0.0):
        return fun([getattr(r, attr) for r in ok]) if ok else default

    for name, fun in (("agg_min", min), ("agg_avg", lambda v: sum(v) / len(v)), ("agg_max", max)):
        out.write(
            f"{name},{rate:.4f},{agg(fun, 'flight_time'):.6f},{agg(fun, 'length'):.6f},"
            f"{agg(fun, 'energy'):.6f},{agg(fun, 'optimize_ms'):.3f},"
            f"{agg(fun, 'function_evaluations'):.2f},{agg(fun, 'v_avg'):.6f},"
            f"{agg(fun, 'v_max'):.6f}\n"
        )
    return out.getvalue()
