"""The rebound planning loop: deform, discover, re-optimize, refine, verify.

A naive straight-line B-spline toward the local goal is optimized while
obstacle pairs are discovered online: every time the pair set changes
the objective changes with it, so the quasi-Newton solver is restarted
from the current control points. Once the control polygon is clear of
obstacles, time is reallocated and the curve re-fitted if any dynamic
limit is exceeded, and a fixed-radius pipe around the final curve is
verified before the trajectory is released.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bspline import UniformBSpline, boundary_ctrl_points
from .config import Config
from .gridmap import OccupancyGrid, SearchFailure, astar_search
from .objective import PairArrays, total_rebound_cost
from .rebound import (
    ControlPointCtx,
    PVPair,
    check_and_add_obstacle_info,
    distance,
    guide_path,
    is_new_obstacle,
)
from .refine import limits_exceed_ratio, refine_trajectory
from .solver import bb_minimize, lbfgs_minimize

log = logging.getLogger(__name__)

_SOLVERS = {"lbfgs": lbfgs_minimize, "bb": bb_minimize}


@dataclass
class RobotState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.acceleration = np.asarray(self.acceleration, dtype=float)
        for v in (self.position, self.velocity, self.acceleration):
            if not np.all(np.isfinite(v)):
                raise ValueError("robot state must be finite")


@dataclass
class PlanStats:
    rebound_iterations: int = 0
    solves: int = 0
    rebound_evals: int = 0
    refine_evals: int = 0
    exceed_ratio: float = 1.0
    refine_rounds: int = 0
    optimize_ms: float = 0.0
    total_ms: float = 0.0

    @property
    def function_evaluations(self) -> int:
        return self.rebound_evals + self.refine_evals


@dataclass
class PlanOutcome:
    trajectory: UniformBSpline | None
    status: str  # ok | refined | fallback | failed
    stats: PlanStats = field(default_factory=PlanStats)
    message: str = ""

    @property
    def succeeded(self) -> bool:
        return self.status in ("ok", "refined", "fallback")


def local_goal(position, global_goal, horizon: float):
    """Goal truncated onto the horizon sphere around the current position."""
    position = np.asarray(position, dtype=float)
    global_goal = np.asarray(global_goal, dtype=float)
    offset = global_goal - position
    dist = float(np.linalg.norm(offset))
    if dist <= horizon:
        return global_goal.copy()
    return position + offset * (horizon / dist)


def find_init(
    prev: PlanOutcome | None,
    state: RobotState,
    goal,
    cfg: Config,
) -> tuple[list[ControlPointCtx], float]:
    """Naive initialization toward the goal, ignoring collisions.

    Straight control polygon at the configured spacing (or the previous
    trajectory's control points extended toward the goal when the goal is
    unchanged), with the first/last degree points overwritten to encode the
    boundary states exactly. Returns (control point contexts, knot interval).
    """
    degree = cfg.planner.degree
    spacing = cfg.planner.ctrl_pt_spacing
    goal = np.asarray(goal, dtype=float)
    prev_traj = prev.trajectory if prev is not None and prev.succeeded else None

    speed = float(np.linalg.norm(state.velocity))
    offset = goal - state.position
    dist = float(np.linalg.norm(offset))
    if (
        speed > 0.2
        and dist > 1e-6
        and float(np.dot(state.velocity, offset)) < 0.5 * speed * dist
    ):
        # goal far off the current heading: route the naive start through
        # the braking point so the boundary velocity stays consistent
        brake = speed**2 / (1.2 * cfg.penalty.a_max) + 0.5 * spacing
        stop_pt = state.position + state.velocity / speed * brake
        return init_from_path(stop_pt[None, :], state, goal, cfg)

    if prev_traj is not None and _reusable(prev_traj, goal, spacing):
        dt = prev_traj.dt
        base = [p.copy() for p in prev_traj.ctrl_pts]
        dists = [np.linalg.norm(p - state.position) for p in base]
        # the nearest point's Greville time ~ the replan time; the boundary
        # triple spans one knot before and after it
        start_idx = int(np.argmin(dists))
        pts = base[max(start_idx - 1, 0):]
        tail = pts[-1]
        gap = float(np.linalg.norm(goal - tail))
        if gap > 1e-9:
            n_ext = max(int(np.ceil(gap / spacing)), 1)
            pts.extend(tail + (goal - tail) * (k / n_ext) for k in range(1, n_ext + 1))
        while len(pts) < 2 * degree:
            pts.append(goal.copy())
    else:
        dist = float(np.linalg.norm(goal - state.position))
        if dist < 1e-6:
            pts = [state.position.copy() for _ in range(2 * degree)]
            dt = spacing / cfg.penalty.v_max * cfg.planner.init_dt_factor
        else:
            n = max(int(round(dist / spacing)) + 1, 2 * degree)
            arc, total_time = _trapezoid_profile(
                dist,
                min(float(np.linalg.norm(state.velocity)), cfg.penalty.v_max),
                cfg.penalty.v_max,
                0.6 * cfg.penalty.a_max,
            )
            dt = total_time / (n - degree) * cfg.planner.init_dt_factor
            direction = (goal - state.position) / dist
            # place point k at its dominant curve time (Greville abscissa)
            span_dt = total_time / (n - degree)
            pts = [
                state.position + direction * arc(np.clip((k - 1) * span_dt, 0.0, total_time))
                for k in range(n)
            ]

    q = np.stack(pts)
    q[:3] = boundary_ctrl_points(state.position, state.velocity, state.acceleration, dt)
    q[-3:] = boundary_ctrl_points(goal, np.zeros(3), np.zeros(3), dt)
    points = [ControlPointCtx(q[i]) for i in range(len(q))]
    for i in range(degree):
        points[i].fixed = True
        points[-1 - i].fixed = True
    return points, dt


def _reusable(prev_traj: UniformBSpline, goal, spacing: float) -> bool:
    return float(np.linalg.norm(prev_traj.ctrl_pts[-1] - goal)) < 2.0 * spacing


def init_from_path(
    waypoints: np.ndarray, state: RobotState, goal, cfg: Config
) -> tuple[list[ControlPointCtx], float]:
    """Recovery initialization: control points resampled along a guiding
    path, used when the straight-line start wedges between obstacles."""
    degree = cfg.planner.degree
    spacing = cfg.planner.ctrl_pt_spacing
    goal = np.asarray(goal, dtype=float)
    wps = np.vstack([state.position[None, :], np.atleast_2d(waypoints), goal[None, :]])
    seg = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(arc[-1])
    if total < 1e-9:
        return find_init(None, state, goal, cfg)
    n = max(int(round(total / spacing)) + 1, 2 * degree)
    profile, total_time = _trapezoid_profile(
        total,
        min(float(np.linalg.norm(state.velocity)), cfg.penalty.v_max),
        cfg.penalty.v_max,
        0.6 * cfg.penalty.a_max,
    )
    span_dt = total_time / (n - degree)
    dt = span_dt * cfg.planner.init_dt_factor
    targets = [profile(np.clip((k - 1) * span_dt, 0.0, total_time)) for k in range(n)]
    pos = np.stack([
        wps[min(np.searchsorted(arc, s), len(wps) - 1)] if s >= arc[-1] else _lerp_arc(wps, arc, s)
        for s in targets
    ])
    pos[:3] = boundary_ctrl_points(state.position, state.velocity, state.acceleration, dt)
    pos[-3:] = boundary_ctrl_points(goal, np.zeros(3), np.zeros(3), dt)
    points = [ControlPointCtx(pos[i]) for i in range(len(pos))]
    for i in range(degree):
        points[i].fixed = True
        points[-1 - i].fixed = True
    return points, dt


def _lerp_arc(wps: np.ndarray, arc: np.ndarray, s: float) -> np.ndarray:
    k = int(np.clip(np.searchsorted(arc, s) - 1, 0, len(wps) - 2))
    width = arc[k + 1] - arc[k]
    frac = 0.0 if width <= 0 else (s - arc[k]) / width
    return wps[k] + frac * (wps[k + 1] - wps[k])


def _trapezoid_profile(dist: float, v0: float, v_max: float, accel: float):
    """Arc length along a ramp-cruise-brake speed profile.

    Returns (s(t), total_time). Keeps the naive initialization close to
    dynamically feasible so obstacle forces dominate the optimization.
    """
    v_peak = min(v_max, np.sqrt(max(accel * dist + 0.5 * v0 * v0, 1e-12)))
    if v_peak < v0:
        # cannot brake within dist at this limit: ride the average speed down
        total = 2.0 * dist / max(v0, 1e-9)

        def arc_linear(t):
            u = np.clip(t / total, 0.0, 1.0)
            return dist * (2.0 * u - u * u)

        return arc_linear, total

    t_acc = (v_peak - v0) / accel
    s_acc = (v_peak * v_peak - v0 * v0) / (2.0 * accel)
    t_dec = v_peak / accel
    s_dec = v_peak * v_peak / (2.0 * accel)
    s_cruise = max(dist - s_acc - s_dec, 0.0)
    t_cruise = s_cruise / v_peak
    total = t_acc + t_cruise + t_dec

    def arc(t):
        t = float(np.clip(t, 0.0, total))
        if t <= t_acc:
            return v0 * t + 0.5 * accel * t * t
        if t <= t_acc + t_cruise:
            return s_acc + v_peak * (t - t_acc)
        tb = t - t_acc - t_cruise
        return s_acc + s_cruise + v_peak * tb - 0.5 * accel * tb * tb

    return arc, total


def _spline_of(points, dt: float, degree: int) -> UniformBSpline:
    return UniformBSpline(np.stack([c.position for c in points]), dt, 0.0, degree)


def rebound_optimize(
    points: list[ControlPointCtx],
    dt: float,
    grid: OccupancyGrid,
    cfg: Config,
    solver: str = "lbfgs",
    debug_sink=None,
    search_grid: OccupancyGrid | None = None,
) -> tuple[UniformBSpline | None, PlanStats, str]:
    """Iterate pair discovery and restarted solves until the control polygon
    is collision-free; the trajectory rebounds between nearby obstacles and
    settles in a safe region."""
    minimize = _SOLVERS[solver]
    stats = PlanStats()
    degree = cfg.planner.degree
    fixed = np.array([c.fixed for c in points])
    free = ~fixed
    if not np.any(free):
        return _spline_of(points, dt, degree), stats, ""
    solver_opts = cfg.solver
    if cfg.planner.one_step_per_round:
        solver_opts = replace(solver_opts, max_iterations=1)
    if search_grid is None:
        search_grid = grid.search_view(_pipe_margin(grid, cfg))

    last_converged = False
    for iteration in range(cfg.planner.max_rebound_iterations):
        if any(c.fixed and grid.blocks(c.position) for c in points):
            return None, stats, "a boundary control point is inside an obstacle"
        colliding = [c for c in points if not c.fixed and grid.blocks(c.position)]
        pipe_pairs_added = 0
        if not colliding:
            # control polygon is clear; the curve itself must clear the pipe
            spline = _spline_of(points, dt, degree)
            violating = _pipe_violation_points(spline, grid, cfg.planner.pipe_radius, points)
            if not violating:
                return spline, stats, ""
            pipe_pairs_added = _add_surface_repulsion_pairs(
                spline, grid, cfg, points, violating
            )
        stats.rebound_iterations += 1

        pair_count = sum(len(c.pairs) for c in points)
        check_and_add_obstacle_info(
            grid, points, dt, debug_sink=debug_sink, iteration=iteration,
            search_grid=search_grid,
        )
        if (
            sum(len(c.pairs) for c in points) == pair_count
            and pipe_pairs_added == 0
            and last_converged
        ):
            # converged solve and nothing new to push against: stuck
            return None, stats, "no new obstacle information for colliding points"

        q = np.stack([c.position for c in points])
        pairs = PairArrays.from_points(points)
        pen = cfg.penalty

        def objective(x):
            q[free] = x.reshape(-1, 3)
            res = total_rebound_cost(q, dt, pairs, pen, fixed)
            return res.value, res.grad[free].ravel()

        report = minimize(objective, q[free].ravel(), solver_opts)
        stats.solves += 1
        stats.rebound_evals += report.function_evaluations
        last_converged = report.converged
        q[free] = report.x_final.reshape(-1, 3)
        for ctx, row in zip(points, q):
            ctx.position = row.copy()

    if any(not c.fixed and grid.blocks(c.position) for c in points):
        return None, stats, "rebound iteration limit reached with collisions left"
    spline = _spline_of(points, dt, degree)
    if _pipe_violation_points(spline, grid, cfg.planner.pipe_radius, points):
        return None, stats, "rebound iteration limit reached with pipe violations left"
    return spline, stats, ""


def _pipe_violation_points(
    spline: UniformBSpline,
    grid: OccupancyGrid,
    pipe_radius: float,
    points: list[ControlPointCtx],
) -> dict[int, np.ndarray]:
    """Non-fixed control points governing curve spans that fail the safety
    pipe, mapped to one violating curve sample each."""
    step = grid.resolution / 2.0
    samples = sample_curve(spline, step)
    per_span = (len(samples) - 1) // max(spline.n_ctrl - spline.degree, 1)
    mask = grid.clearance_mask(samples, pipe_radius + step / 2.0)
    mask |= grid.clearance_mask(samples, 0.0)
    bad: dict[int, np.ndarray] = {}
    for k in np.nonzero(mask)[0]:
        span = min(int(k) // max(per_span, 1), spline.n_ctrl - spline.degree - 1)
        for j in range(span, span + spline.degree + 1):
            if 0 <= j < len(points) and not points[j].fixed and j not in bad:
                bad[j] = samples[int(k)]
    return bad


def _add_surface_repulsion_pairs(
    spline: UniformBSpline,
    grid: OccupancyGrid,
    cfg: Config,
    points: list[ControlPointCtx],
    violating: dict[int, np.ndarray],
) -> int:
    """Anchor pipe-violating control points against the nearest obstacle
    surface: p at the closest occupied voxel center, v pointing away from
    it, so the clearance penalty drives the curve out to the safety
    distance. Returns the number of pairs added.
    """
    reach = cfg.penalty.s_f + cfg.planner.pipe_radius + 2.0 * grid.resolution
    added = 0
    for j, sample in violating.items():
        ctx = points[j]
        if not is_new_obstacle(ctx):
            continue
        anchor = grid.nearest_occupied(ctx.position, reach)
        if anchor is None:
            anchor = grid.nearest_occupied(sample, reach)
        if anchor is None:
            continue
        away = ctx.position - anchor
        norm = float(np.linalg.norm(away))
        if norm < 1e-9 or norm >= cfg.penalty.s_f:
            # a pair born outside the clearance shell exerts no force
            continue
        v = away / norm
        # skip when an equivalent repulsion is already active
        if any(
            float(np.dot(pair.v, v)) > 0.7 and distance(ctx.position, pair) < cfg.penalty.s_f
            for pair in ctx.pairs
        ):
            continue
        ctx.pairs.append(PVPair(np.asarray(anchor), v))
        added += 1
    return added


def _pipe_margin(grid: OccupancyGrid, cfg: Config) -> float:
    return cfg.planner.pipe_radius + grid.resolution / 4.0


def _nudge_target_free(target, position, grid: OccupancyGrid, cfg: Config):
    """Pull an occupied local goal back along the approach line until it has
    enough clearance to park at; None when the whole line is blocked."""
    required = cfg.planner.pipe_radius + grid.resolution
    if not grid.clearance_violated(target[None, :], required):
        return target
    position = np.asarray(position, dtype=float)
    offset = target - position
    dist = float(np.linalg.norm(offset))
    if dist < 1e-9:
        return None
    steps = int(np.ceil(dist / (grid.resolution / 2.0)))
    for k in range(1, steps + 1):
        cand = target - offset * (k / steps)
        if not grid.clearance_violated(cand[None, :], required):
            return cand
    return None


def pipe_collision_check(
    spline: UniformBSpline, grid: OccupancyGrid, pipe_radius: float
) -> bool:
    """Clearance check of a fixed-radius pipe around the whole curve.

    Samples densely enough that consecutive samples are at most half a
    voxel apart along the curve, and pads the required clearance by half
    that step so the discrete verdict covers every in-between point.
    """
    step = grid.resolution / 2.0
    samples = sample_curve(spline, step)
    if grid.clearance_violated(samples, 0.0):
        return False
    return not grid.clearance_violated(samples, pipe_radius + step / 2.0)


def sample_curve(spline: UniformBSpline, step: float) -> np.ndarray:
    """Curve positions whose spacing along the curve is at most `step`."""
    if spline.degree >= 1 and spline.n_ctrl > 1:
        vel_pts = spline.derivative_ctrl_points(1).ctrl_pts
        speed_bound = float(np.max(np.linalg.norm(vel_pts, axis=1)))
    else:
        speed_bound = 0.0
    spans = spline.n_ctrl - spline.degree
    per_span = max(int(np.ceil(speed_bound * spline.dt / step)), 1)
    lo, hi = spline.domain()
    ts = np.linspace(lo, hi, spans * per_span + 1)
    return spline.evaluate(ts, 0)


def plan(
    state: RobotState,
    goal,
    grid: OccupancyGrid,
    cfg: Config,
    prev: PlanOutcome | None = None,
    solver: str = "lbfgs",
    debug_sink=None,
) -> PlanOutcome:
    """One full planning episode from the current state toward the goal."""
    t_start = time.perf_counter()
    target = local_goal(state.position, goal, cfg.planner.horizon)
    target = _nudge_target_free(target, state.position, grid, cfg)
    if target is None:
        return PlanOutcome(None, "failed", PlanStats(),
                           "no free local goal along the approach line")
    points, dt = find_init(prev, state, target, cfg)
    # map-layer preparation (dilated search view) stays out of the
    # optimization clock, like map integration in the timing tables
    search_grid = grid.search_view(_pipe_margin(grid, cfg))

    t_opt = time.perf_counter()
    safe, stats, message = rebound_optimize(
        points, dt, grid, cfg, solver, debug_sink, search_grid
    )
    if safe is None and "boundary control point" not in message:
        # straight start wedged between obstacles: retry once seeded along
        # the guiding path, which the deformation only has to polish
        try:
            guide = guide_path(grid, state.position, target, search_grid=search_grid)
            points, dt = init_from_path(guide.waypoints, state, target, cfg)
            safe, retry_stats, message = rebound_optimize(
                points, dt, grid, cfg, solver, debug_sink, search_grid
            )
            stats.rebound_iterations += retry_stats.rebound_iterations
            stats.solves += retry_stats.solves
            stats.rebound_evals += retry_stats.rebound_evals
        except SearchFailure as exc:
            message = f"{message}; guiding path retry failed: {exc}"
    if safe is None:
        stats.optimize_ms = (time.perf_counter() - t_opt) * 1e3
        stats.total_ms = (time.perf_counter() - t_start) * 1e3
        return PlanOutcome(None, "failed", stats, message)

    stats.exceed_ratio = limits_exceed_ratio(safe, cfg.penalty)
    if stats.exceed_ratio > 1.0 + 1e-9:
        refined = refine_trajectory(safe, cfg)
        stats.refine_evals = refined.function_evaluations
        stats.refine_rounds = refined.rounds
        final = refined.trajectory
        status = "refined" if refined.status == "refined" else "fallback"
    else:
        final = safe
        status = "ok"
    stats.optimize_ms = (time.perf_counter() - t_opt) * 1e3

    if not pipe_collision_check(final, grid, cfg.planner.pipe_radius):
        fallback_ok = False
        if status == "refined":
            stretched = safe.with_dt(stats.exceed_ratio * safe.dt)
            if pipe_collision_check(stretched, grid, cfg.planner.pipe_radius):
                final, status, fallback_ok = stretched, "fallback", True
        if not fallback_ok:
            stats.total_ms = (time.perf_counter() - t_start) * 1e3
            return PlanOutcome(None, "failed", stats, "safety pipe check failed")

    stats.total_ms = (time.perf_counter() - t_start) * 1e3
    return PlanOutcome(final, status, stats)
