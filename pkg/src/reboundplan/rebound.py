"""Anchor-point / repulsion-direction pairs attached to control points.

Each colliding control point owns one pair per obstacle it has
discovered: an anchor p on the obstacle surface (picked on a guiding
path) plus the unit direction v from the control point to p at creation
time. The scalar d = (Q - p) . v acts as a per-obstacle distance proxy:
negative on the control point's side, zero on the plane through p, and
positive once the point has escaped past the anchor plane.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .gridmap import GridPath, OccupancyGrid, SearchFailure, astar_search

log = logging.getLogger(__name__)

_UNIT_TOL = 1e-9
_DEGENERATE_TOL = 1e-6


@dataclass
class PVPair:
    """Obstacle anchor p and unit repulsion direction v."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        norm = np.linalg.norm(self.v)
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"repulsion direction must be unit length, got |v|={norm}")


@dataclass
class ControlPointCtx:
    """One decision variable plus its discovered obstacle pairs."""

    position: np.ndarray
    pairs: list[PVPair] = field(default_factory=list)
    fixed: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class CollidingSegment:
    """Maximal run [begin, end] of consecutive in-collision control points."""

    begin: int
    end: int


def distance(q, pair: PVPair) -> float:
    """Signed obstacle distance proxy d = (Q - p) . v."""
    return float(np.dot(np.asarray(q, dtype=float) - pair.p, pair.v))


def is_new_obstacle(ctx: ControlPointCtx) -> bool:
    """True iff the point carries no pair or has escaped every known one,
    so a collision here means a not-yet-registered obstacle."""
    return all(distance(ctx.position, pair) > 0.0 for pair in ctx.pairs)


def find_colliding_segments(
    points: list[ControlPointCtx], grid: OccupancyGrid
) -> list[CollidingSegment]:
    """Maximal runs of consecutive colliding non-fixed control points."""
    colliding = [
        (not p.fixed) and grid.blocks(p.position) for p in points
    ]
    segments: list[CollidingSegment] = []
    start = None
    for i, hit in enumerate(colliding):
        if hit and start is None:
            start = i
        elif not hit and start is not None:
            segments.append(CollidingSegment(start, i - 1))
            start = None
    if start is not None:
        segments.append(CollidingSegment(start, len(points) - 1))
    return segments


def plane_path_anchor(
    q, tangent, path: GridPath, resolution: float = 0.1
) -> PVPair:
    """Anchor where the guiding path crosses the plane through q normal to
    the tangent; falls back to the nearest path waypoint when the plane
    misses the path entirely."""
    q = np.asarray(q, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    wps = np.atleast_2d(path.waypoints)
    if len(wps) == 0:
        raise ValueError("guiding path is empty")

    best = None
    t_norm = np.linalg.norm(tangent)
    if t_norm > 0.0:
        s = (wps - q[None, :]) @ tangent
        for k in range(len(wps) - 1):
            a, b = s[k], s[k + 1]
            if a == 0.0 and b == 0.0:
                continue
            if a * b <= 0.0:
                frac = a / (a - b) if a != b else 0.0
                p = wps[k] + frac * (wps[k + 1] - wps[k])
                d = np.linalg.norm(p - q)
                if best is None or d < best[0]:
                    best = (d, p)
        if best is None and len(wps) == 1 and abs(s[0]) == 0.0:
            best = (np.linalg.norm(wps[0] - q), wps[0])
    if best is None:
        # plane misses the path: repel toward the closest waypoint instead
        dists = np.linalg.norm(wps - q[None, :], axis=1)
        k = int(np.argmin(dists))
        best = (dists[k], wps[k].copy())
    p = np.asarray(best[1], dtype=float)

    if np.linalg.norm(p - q) < _DEGENERATE_TOL:
        # nudge the anchor one voxel along the path to recover a direction
        p = _perturb_along_path(p, wps, resolution)
        if np.linalg.norm(p - q) < _DEGENERATE_TOL:
            raise ValueError("anchor coincides with the control point")
    v = (p - q) / np.linalg.norm(p - q)
    return PVPair(p, v)


def _perturb_along_path(p, wps, resolution: float):
    if len(wps) < 2:
        return p
    seg_idx = int(np.argmin(np.linalg.norm(wps - p[None, :], axis=1)))
    other = seg_idx + 1 if seg_idx + 1 < len(wps) else seg_idx - 1
    direction = wps[other] - wps[seg_idx]
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return p
    return p + direction / norm * resolution


def check_and_add_obstacle_info(
    grid: OccupancyGrid,
    points: list[ControlPointCtx],
    dt: float,
    max_expansions: int = 100_000,
    debug_sink=None,
    iteration: int = 0,
    search_grid: OccupancyGrid | None = None,
) -> bool:
    """Discover new obstacles along the control polygon and attach pairs.

    For every maximal colliding segment whose points have escaped all known
    obstacles, searches a guiding path between the free neighbors of the
    segment and anchors one new pair per such control point. Returns False
    when a segment had to be skipped (no free bracket or path search
    failed); the caller decides whether to keep iterating.
    """
    ok = True
    for seg in find_colliding_segments(points, grid):
        fresh = [
            j for j in range(seg.begin, seg.end + 1) if is_new_obstacle(points[j])
        ]
        if not fresh:
            continue
        before = _nearest_free(points, grid, seg.begin - 1, step=-1)
        after = _nearest_free(points, grid, seg.end + 1, step=+1)
        if before is None or after is None:
            log.warning("colliding segment [%d, %d] has no free bracket",
                        seg.begin, seg.end)
            ok = False
            continue
        try:
            path = guide_path(
                grid, points[before].position, points[after].position,
                max_expansions, search_grid, wide_expansions=2_000,
            )
        except SearchFailure as exc:
            log.warning("guiding path search failed for segment [%d, %d]: %s",
                        seg.begin, seg.end, exc)
            ok = False
            continue
        for j in fresh:
            tangent = _segment_tangent(points, j, dt)
            try:
                pair = plane_path_anchor(points[j].position, tangent, path, grid.resolution)
            except ValueError as exc:
                log.warning("anchor generation failed at control point %d: %s", j, exc)
                ok = False
                continue
            points[j].pairs.append(pair)
    if debug_sink is not None:
        dump_pairs(debug_sink, points, iteration)
    return ok


def guide_path(
    grid: OccupancyGrid,
    start,
    goal,
    max_expansions: int = 100_000,
    search_grid: OccupancyGrid | None = None,
    wide_expansions: int = 8_000,
) -> GridPath:
    """Guiding path search that prefers corridors wide enough for the
    safety pipe.

    Searches the base grid first (cheap); if that path squeezes through
    the margin-dilated view's occupied set, retries on the dilated view
    with a bounded budget and falls back to the narrow path when no wide
    route exists.
    """
    path = astar_search(grid, start, goal, max_expansions)
    if search_grid is None or search_grid is grid:
        return path
    idx = np.floor(
        (path.waypoints - search_grid.origin[None, :]) / search_grid.resolution
    ).astype(int)
    dims = np.array(search_grid.dims)
    inside = np.all((idx >= 0) & (idx < dims[None, :]), axis=1)
    sel = idx[inside]
    if not np.any(search_grid.occupancy[sel[:, 0], sel[:, 1], sel[:, 2]]):
        return path
    try:
        return astar_search(search_grid, start, goal, wide_expansions)
    except SearchFailure:
        return path


def _nearest_free(points, grid, start: int, step: int):
    j = start
    while 0 <= j < len(points):
        if not grid.blocks(points[j].position):
            return j
        j += step
    return None


def _segment_tangent(points, j: int, dt: float) -> np.ndarray:
    if 1 <= j <= len(points) - 2:
        return (points[j + 1].position - points[j - 1].position) / (2.0 * dt)
    if j == 0:
        return (points[1].position - points[0].position) / dt
    return (points[-1].position - points[-2].position) / dt


def dump_pairs(sink, points: list[ControlPointCtx], iteration: int) -> None:
    """One JSON line per control point carrying pairs, for offline debugging."""
    for i, ctx in enumerate(points):
        if not ctx.pairs:
            continue
        rec = {
            "iteration": iteration,
            "index": i,
            "pairs": [
                {
                    "p": [round(float(x), 6) for x in pair.p],
                    "v": [round(float(x), 6) for x in pair.v],
                    "d": round(distance(ctx.position, pair), 6),
                }
                for pair in ctx.pairs
            ],
        }
        sink.write(json.dumps(rec) + "\n")
