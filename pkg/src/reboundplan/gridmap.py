"""Inflated 3D occupancy grid with A* search and clearance queries.

The environment the planner senses: a dense boolean voxel volume built
from boxes/points, dilated once by a fixed inflation radius. Out-of-bound
queries report `unknown` (treated as free by the optimistic default).
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

try:
    from numba import njit

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is optional
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco

log = logging.getLogger(__name__)


class Occupancy(Enum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


class SearchFailure(RuntimeError):
    """A* could not reach the goal; carries the best partial path found."""

    def __init__(self, message: str, partial_path: "GridPath | None" = None):
        super().__init__(message)
        self.partial_path = partial_path


@dataclass
class GridPath:
    """Ordered voxel-center waypoints of a grid search result."""

    waypoints: np.ndarray  # (n, 3) voxel centers [m]

    def __len__(self) -> int:
        return len(self.waypoints)


# 26-connected neighbor offsets with Euclidean step lengths (unit voxels)
_OFFSETS = np.array(
    [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)], dtype=np.int64
)
_OFFSET_COSTS = np.linalg.norm(_OFFSETS, axis=1)


@njit(cache=True)
def _astar_core(occ, sx, sy, sz, gx, gy, gz, res, max_expansions, h_weight,
                offsets, offset_costs):
    """Array-based A* over a flat-indexed voxel volume.

    Returns (found, best_idx, expansions, came) where came[i] is the flat
    predecessor of voxel i (-1 when unvisited) and best_idx is the goal on
    success or the expanded voxel closest to it otherwise.
    """
    nx, ny, nz = occ.shape
    n = nx * ny * nz
    start = (sx * ny + sy) * nz + sz
    goal = (gx * ny + gy) * nz + gz
    g_score = np.full(n, np.inf)
    came = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.uint8)

    cap = 8 * max_expansions + 64
    heap_f = np.empty(cap)
    heap_g = np.empty(cap)
    heap_i = np.empty(cap, dtype=np.int64)
    size = 0

    def h_of(x, y, z):
        return np.sqrt(float((x - gx) ** 2 + (y - gy) ** 2 + (z - gz) ** 2)) * res * h_weight

    # push start
    heap_f[0] = h_of(sx, sy, sz)
    heap_g[0] = 0.0
    heap_i[0] = start
    size = 1
    g_score[start] = 0.0

    best_idx = start
    best_h = h_of(sx, sy, sz)
    expansions = 0
    found = False

    while size > 0:
        top_f = heap_f[0]
        top_g = heap_g[0]
        cur = heap_i[0]
        # pop root
        size -= 1
        if size > 0:
            heap_f[0] = heap_f[size]
            heap_g[0] = heap_g[size]
            heap_i[0] = heap_i[size]
            pos = 0
            while True:
                left = 2 * pos + 1
                right = left + 1
                small = pos
                if left < size and (
                    heap_f[left] < heap_f[small]
                    or (heap_f[left] == heap_f[small] and heap_g[left] > heap_g[small])
                ):
                    small = left
                if right < size and (
                    heap_f[right] < heap_f[small]
                    or (heap_f[right] == heap_f[small] and heap_g[right] > heap_g[small])
                ):
                    small = right
                if small == pos:
                    break
                heap_f[pos], heap_f[small] = heap_f[small], heap_f[pos]
                heap_g[pos], heap_g[small] = heap_g[small], heap_g[pos]
                heap_i[pos], heap_i[small] = heap_i[small], heap_i[pos]
                pos = small
        if closed[cur]:
            continue
        closed[cur] = 1
        expansions += 1
        hc = top_f - top_g
        if hc < best_h:
            best_h = hc
            best_idx = cur
        if cur == goal:
            found = True
            break
        if expansions >= max_expansions:
            break
        cz = cur % nz
        cy = (cur // nz) % ny
        cx = cur // (ny * nz)
        g_cur = g_score[cur]
        for k in range(offsets.shape[0]):
            x = cx + offsets[k, 0]
            y = cy + offsets[k, 1]
            z = cz + offsets[k, 2]
            if x < 0 or y < 0 or z < 0 or x >= nx or y >= ny or z >= nz:
                continue
            if occ[x, y, z]:
                continue
            nb = (x * ny + y) * nz + z
            if closed[nb]:
                continue
            cand = g_cur + offset_costs[k] * res
            if cand < g_score[nb]:
                g_score[nb] = cand
                came[nb] = cur
                if size >= cap:
                    return found, best_idx, expansions, came
                # push
                heap_f[size] = cand + h_of(x, y, z)
                heap_g[size] = cand
                heap_i[size] = nb
                pos = size
                size += 1
                while pos > 0:
                    parent = (pos - 1) // 2
                    if heap_f[pos] < heap_f[parent] or (
                        heap_f[pos] == heap_f[parent] and heap_g[pos] > heap_g[parent]
                    ):
                        heap_f[pos], heap_f[parent] = heap_f[parent], heap_f[pos]
                        heap_g[pos], heap_g[parent] = heap_g[parent], heap_g[pos]
                        heap_i[pos], heap_i[parent] = heap_i[parent], heap_i[pos]
                        pos = parent
                    else:
                        break
    return found, best_idx, expansions, came


class OccupancyGrid:
    """Dense inflated occupancy volume with world <-> voxel mapping."""

    def __init__(
        self,
        origin,
        resolution: float,
        dims,
        inflation_radius: float = 0.0,
        unknown_is_free: bool = True,
    ):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        dims = tuple(int(d) for d in dims)
        if any(d <= 0 for d in dims):
            raise ValueError("dims must be positive")
        self.origin = np.asarray(origin, dtype=float)
        self.resolution = float(resolution)
        self.dims = dims
        self.inflation_radius = float(inflation_radius)
        self.unknown_is_free = unknown_is_free
        self._raw = np.zeros(dims, dtype=bool)
        self.occupancy = np.zeros(dims, dtype=bool)
        self._raw_dist = None
        self._offset_cache: dict[float, np.ndarray] = {}

    # -- building ---------------------------------------------------------

    def add_obstacles(self, obstacles) -> None:
        """Mark boxes ('box', lo, hi) and points ('pt', p); call inflate() after."""
        res = self.resolution
        for obs in obstacles:
            kind = obs[0]
            if kind == "box":
                lo = np.asarray(obs[1], dtype=float)
                hi = np.asarray(obs[2], dtype=float)
                lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
                i_lo = np.floor((lo - self.origin) / res).astype(int)
                i_hi = np.ceil((hi - self.origin) / res).astype(int) - 1
                i_hi = np.maximum(i_hi, i_lo)
                if np.any(i_hi < 0) or np.any(i_lo >= self.dims):
                    log.debug("obstacle box %s outside grid bounds, clipped away", obs)
                    continue
                c_lo = np.clip(i_lo, 0, np.array(self.dims) - 1)
                c_hi = np.clip(i_hi, 0, np.array(self.dims) - 1)
                if np.any(c_lo != i_lo) or np.any(c_hi != i_hi):
                    log.debug("obstacle box %s partially outside bounds, clipped", obs)
                self._raw[
                    c_lo[0] : c_hi[0] + 1, c_lo[1] : c_hi[1] + 1, c_lo[2] : c_hi[2] + 1
                ] = True
            elif kind == "pt":
                idx = self.world_to_voxel(np.asarray(obs[1], dtype=float))
                if self.in_bounds(idx):
                    self._raw[tuple(idx)] = True
                else:
                    log.debug("obstacle point %s outside grid bounds, clipped", obs)
            else:
                raise ValueError(f"unknown obstacle kind {kind!r}")

    def inflate(self) -> None:
        """Dilate the raw occupancy by the inflation radius (voxel-center metric)."""
        if not self._raw.any():
            self.occupancy = self._raw.copy()
            self._raw_dist = None
            return
        self._raw_dist = ndimage.distance_transform_edt(
            ~self._raw, sampling=self.resolution
        )
        if self.inflation_radius <= 0:
            self.occupancy = self._raw.copy()
        else:
            self.occupancy = self._raw_dist <= self.inflation_radius + 1e-12

    # -- queries ----------------------------------------------------------

    def world_to_voxel(self, pt) -> np.ndarray:
        return np.floor((np.asarray(pt, dtype=float) - self.origin) / self.resolution).astype(int)

    def voxel_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def in_bounds(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < self.dims))

    def is_occupied(self, pt) -> Occupancy:
        idx = self.world_to_voxel(pt)
        if not self.in_bounds(idx):
            return Occupancy.UNKNOWN
        return Occupancy.OCCUPIED if self.occupancy[tuple(idx)] else Occupancy.FREE

    def blocks(self, pt) -> bool:
        """True iff the point is unavailable for travel under the unknown-space policy."""
        state = self.is_occupied(pt)
        if state is Occupancy.UNKNOWN:
            return not self.unknown_is_free
        return state is Occupancy.OCCUPIED

    def _candidate_offsets(self, radius: float) -> np.ndarray:
        # superset ball: query points sit anywhere inside their voxel, so pad
        # the center-to-center reach by the voxel half-diagonal
        key = round(radius, 12)
        cached = self._offset_cache.get(key)
        if cached is not None:
            return cached
        pad = radius + self.resolution * np.sqrt(3.0) / 2.0
        reach = int(np.ceil(pad / self.resolution + 1e-9))
        rng = np.arange(-reach, reach + 1)
        ox, oy, oz = np.meshgrid(rng, rng, rng, indexing="ij")
        offs = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
        keep = np.linalg.norm(offs, axis=1) * self.resolution <= pad + 1e-9
        self._offset_cache[key] = offs[keep]
        return offs[keep]

    def search_view(self, extra_radius: float) -> "OccupancyGrid":
        """Read-only twin with the occupied set dilated by an extra margin,
        for guiding-path searches that must keep corridor width."""
        if extra_radius <= 0:
            return self
        key = round(extra_radius, 12)
        cached = getattr(self, "_search_views", None)
        if cached is None:
            cached = self._search_views = {}
        view = cached.get(key)
        if view is None:
            view = OccupancyGrid(
                self.origin, self.resolution, self.dims, 0.0, self.unknown_is_free
            )
            raw_dist = getattr(self, "_raw_dist", None)
            if raw_dist is not None:
                view.occupancy = raw_dist <= self.inflation_radius + extra_radius + 1e-12
            elif self.occupancy.any():
                dist = ndimage.distance_transform_edt(
                    ~self.occupancy, sampling=self.resolution
                )
                view.occupancy = dist <= extra_radius + 1e-12
            cached[key] = view
        return view

    def clearance_mask(self, points: np.ndarray, radius: float) -> np.ndarray:
        """Per-point verdicts: True where an occupied voxel center lies within
        `radius` of the point. Points outside the grid follow the
        unknown-space policy."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dims = np.array(self.dims)
        idx0 = np.floor((points - self.origin[None, :]) / self.resolution).astype(int)
        if radius <= 0:
            inside = np.all((idx0 >= 0) & (idx0 < dims[None, :]), axis=1)
            out = np.zeros(len(points), dtype=bool)
            sel = idx0[inside]
            out[inside] = self.occupancy[sel[:, 0], sel[:, 1], sel[:, 2]]
            if not self.unknown_is_free:
                out[~inside] = True
            return out
        out = np.zeros(len(points), dtype=bool)
        for off in self._candidate_offsets(radius):
            idx = idx0 + off[None, :]
            inside = np.all((idx >= 0) & (idx < dims[None, :]), axis=1)
            centers = self.origin[None, :] + (idx + 0.5) * self.resolution
            within = np.linalg.norm(centers - points, axis=1) <= radius + 1e-9
            hit = within & inside
            if np.any(hit):
                sel = idx[hit]
                occ = self.occupancy[sel[:, 0], sel[:, 1], sel[:, 2]]
                out[np.nonzero(hit)[0][occ]] = True
            if not self.unknown_is_free:
                out |= within & ~inside
        return out

    def clearance_violated(self, points: np.ndarray, radius: float) -> bool:
        """True iff any occupied voxel center lies within `radius` of any point."""
        return bool(np.any(self.clearance_mask(points, radius)))

    def nearest_occupied(self, pt, radius: float):
        """Center of the closest occupied voxel within `radius` of pt, or None."""
        pt = np.asarray(pt, dtype=float)
        dims = np.array(self.dims)
        base = np.floor((pt - self.origin) / self.resolution).astype(int)
        idx = base[None, :] + self._candidate_offsets(radius)
        inside = np.all((idx >= 0) & (idx < dims[None, :]), axis=1)
        idx = idx[inside]
        if len(idx) == 0:
            return None
        occ = self.occupancy[idx[:, 0], idx[:, 1], idx[:, 2]]
        idx = idx[occ]
        if len(idx) == 0:
            return None
        centers = self.origin[None, :] + (idx + 0.5) * self.resolution
        dist = np.linalg.norm(centers - pt[None, :], axis=1)
        best = int(np.argmin(dist))
        if dist[best] > radius + 1e-9:
            return None
        return centers[best]


def build_grid(
    obstacles,
    resolution: float,
    origin,
    dims,
    inflation_radius: float = 0.0,
    unknown_is_free: bool = True,
) -> OccupancyGrid:
    """Grid whose occupied set is the obstacle voxels dilated by the inflation radius."""
    grid = OccupancyGrid(origin, resolution, dims, inflation_radius, unknown_is_free)
    grid.add_obstacles(obstacles)
    grid.inflate()
    return grid


def astar_search(
    grid: OccupancyGrid,
    start,
    goal,
    max_expansions: int = 100_000,
    heuristic_weight: float = 1.0,
) -> GridPath:
    """Shortest 26-connected voxel path between the voxels containing start and goal.

    Euclidean edge costs and heuristic; ties broken toward larger g. Raises
    SearchFailure (carrying the best partial path) when the goal is occupied,
    unreachable, or the expansion budget runs out. A heuristic weight above 1
    trades the optimality guarantee for far fewer expansions (guiding-path
    searches use this; they only need a reasonable corridor).
    """
    res = grid.resolution
    nx, ny, nz = grid.dims
    s_idx = grid.world_to_voxel(start)
    g_idx = grid.world_to_voxel(goal)
    if not grid.in_bounds(s_idx):
        raise SearchFailure("start outside grid bounds")
    if not grid.in_bounds(g_idx):
        raise SearchFailure("goal outside grid bounds")
    s = (int(s_idx[0]), int(s_idx[1]), int(s_idx[2]))
    g = (int(g_idx[0]), int(g_idx[1]), int(g_idx[2]))
    occ = grid.occupancy
    if occ[s]:
        raise SearchFailure("start voxel is occupied")
    if occ[g]:
        raise SearchFailure(
            "goal voxel is occupied", partial_path=GridPath(grid.voxel_center(s_idx)[None, :])
        )

    if _HAVE_NUMBA:
        found, best_idx, expansions, came_flat = _astar_core(
            occ, s[0], s[1], s[2], g[0], g[1], g[2], res,
            max_expansions, heuristic_weight, _OFFSETS, _OFFSET_COSTS,
        )
        end = int(best_idx)
        chain = [end]
        while came_flat[chain[-1]] != -1:
            chain.append(int(came_flat[chain[-1]]))
        chain.reverse()
        coords = np.array(chain, dtype=np.int64)
        pts = np.stack(
            [coords // (ny * nz), (coords // nz) % ny, coords % nz], axis=1
        )
        path = GridPath(grid.origin[None, :] + (pts + 0.5) * res)
        if found:
            return path
        raise SearchFailure(
            f"goal unreachable after {expansions} expansions", partial_path=path
        )

    sqrt = np.sqrt
    gx, gy, gz = g
    h_scale = res * heuristic_weight

    def h(x, y, z) -> float:
        return sqrt((x - gx) ** 2 + (y - gy) ** 2 + (z - gz) ** 2) * h_scale

    steps = [
        (int(o[0]), int(o[1]), int(o[2]), float(c) * res)
        for o, c in zip(_OFFSETS, _OFFSET_COSTS)
    ]
    g_score = {s: 0.0}
    came: dict[tuple, tuple] = {}
    h0 = h(*s)
    open_heap = [(h0, 0.0, s)]
    closed: set[tuple] = set()
    best = (h0, s)
    expansions = 0

    while open_heap:
        f, neg_g, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        closed.add(cur)
        expansions += 1
        cx, cy, cz = cur
        hc = f + neg_g  # f = g + h and neg_g = -g at push time for this entry
        if hc < best[0]:
            best = (hc, cur)
        if cur == g:
            return GridPath(np.array([grid.voxel_center(i) for i in _walk_back(came, cur)]))
        if expansions >= max_expansions:
            break
        g_cur = g_score[cur]
        for dx, dy, dz, cost in steps:
            x, y, z = cx + dx, cy + dy, cz + dz
            if x < 0 or y < 0 or z < 0 or x >= nx or y >= ny or z >= nz:
                continue
            nb = (x, y, z)
            if nb in closed or occ[x, y, z]:
                continue
            cand = g_cur + cost
            if cand < g_score.get(nb, np.inf):
                g_score[nb] = cand
                came[nb] = cur
                heapq.heappush(open_heap, (cand + h(x, y, z), -cand, nb))

    partial = GridPath(np.array([grid.voxel_center(i) for i in _walk_back(came, best[1])]))
    raise SearchFailure(
        f"goal unreachable after {expansions} expansions", partial_path=partial
    )


def _walk_back(came: dict, node: tuple) -> list[tuple]:
    out = [node]
    while node in came:
        node = came[node]
        out.append(node)
    return out[::-1]


def segment_free(grid: OccupancyGrid, p0, p1, radius: float) -> bool:
    """True iff every sample along p0 -> p1 (step <= resolution/2) keeps all
    occupied voxel centers farther than `radius`."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.linalg.norm(p1 - p0))
    n = max(int(np.ceil(length / (grid.resolution / 2.0))), 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
    return not grid.clearance_violated(pts, radius)


# -- map files -------------------------------------------------------------


def write_map_file(path, resolution: float, origin, dims, obstacles) -> None:
    """Text map: header `resolution ox oy oz nx ny nz`, then box/pt lines."""
    with open(path, "w") as fh:
        ox, oy, oz = (float(v) for v in origin)
        nx, ny, nz = (int(v) for v in dims)
        fh.write(f"{resolution:.9g} {ox:.9g} {oy:.9g} {oz:.9g} {nx} {ny} {nz}\n")
        for obs in obstacles:
            if obs[0] == "box":
                lo, hi = obs[1], obs[2]
                fh.write(
                    "box " + " ".join(f"{float(v):.9g}" for v in (*lo, *hi)) + "\n"
                )
            elif obs[0] == "pt":
                fh.write("pt " + " ".join(f"{float(v):.9g}" for v in obs[1]) + "\n")
            else:
                raise ValueError(f"unknown obstacle kind {obs[0]!r}")


def load_map_file(path, inflation_radius: float = 0.0, unknown_is_free: bool = True):
    """Returns (grid, obstacles) parsed from the text map format."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"empty map file {path}")
    head = lines[0].split()
    if len(head) != 7:
        raise ValueError("map header must be: resolution ox oy oz nx ny nz")
    resolution = float(head[0])
    origin = [float(v) for v in head[1:4]]
    dims = [int(v) for v in head[4:7]]
    obstacles = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "box" and len(parts) == 7:
            vals = [float(v) for v in parts[1:]]
            obstacles.append(("box", vals[:3], vals[3:]))
        elif parts[0] == "pt" and len(parts) == 4:
            obstacles.append(("pt", [float(v) for v in parts[1:]]))
        else:
            raise ValueError(f"bad map line: {ln!r}")
    grid = build_grid(obstacles, resolution, origin, dims, inflation_radius, unknown_is_free)
    return grid, obstacles
