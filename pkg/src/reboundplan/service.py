"""Simulation service: a point robot tracking planned trajectories.

Speaks newline-delimited JSON over TCP. Inbound messages steer the run
(goal, reset, load_map); outbound messages stream the robot state at the
loop rate plus trajectory/map/status events. Replans trigger on new
goals, on a periodic timer while en route, and whenever a map change
invalidates the active trajectory. Switches happen at knot times of the
active trajectory, where the boundary states splice exactly.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
from pathlib import Path
from queue import Empty, Queue

import numpy as np

from .bspline import UniformBSpline
from .config import Config
from .gridmap import OccupancyGrid, load_map_file
from .planner import PlanOutcome, RobotState, pipe_collision_check, plan

log = logging.getLogger(__name__)

TICK = 0.02          # state broadcast period [s]
LOOKAHEAD = 0.3      # planning lead time before a trajectory switch [s]


class SimulationService:
    """Long-running goal-chasing simulation around the planner."""

    def __init__(
        self,
        grid: OccupancyGrid,
        boxes: list,
        cfg: Config,
        port: int = 0,
        start=(0.5, 0.5, 0.5),
        map_dir: str | None = None,
    ):
        self.grid = grid
        self.boxes = boxes
        self.cfg = cfg
        self.map_dir = Path(map_dir) if map_dir else None
        self.home = np.asarray(start, dtype=float)
        self.state = RobotState(self.home.copy())
        self.goal: np.ndarray | None = None
        self.active: tuple[float, UniformBSpline] | None = None  # (wall t0, spline)
        self.scheduled: tuple[float, UniformBSpline] | None = None
        self.prev_outcome: PlanOutcome | None = None
        self.last_replan = 0.0

        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind(("127.0.0.1", port))
        self._server.listen(8)
        self.port = self._server.getsockname()[1]
        self._clients: list[socket.socket] = []
        self._clients_lock = threading.Lock()
        self._inbox: Queue = Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "SimulationService":
        self.grid.search_view(self.cfg.planner.pipe_radius + self.grid.resolution / 4.0)
        for target in (self._accept_loop, self._main_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        try:
            self._server.close()
        except OSError:
            pass
        with self._clients_lock:
            for c in self._clients:
                try:
                    c.close()
                except OSError:
                    pass
            self._clients.clear()
        for t in self._threads:
            t.join(timeout=2.0)

    # -- networking ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                client, _ = self._server.accept()
            except OSError:
                return
            client.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._clients_lock:
                self._clients.append(client)
            self._send(client, {"type": "map", "boxes": self._map_message()})
            reader = threading.Thread(target=self._read_loop, args=(client,), daemon=True)
            reader.start()
            self._threads.append(reader)

    def _read_loop(self, client: socket.socket) -> None:
        buf = b""
        while not self._stop.is_set():
            try:
                chunk = client.recv(4096)
            except OSError:
                break
            if not chunk:
                break
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if line.strip():
                    self._inbox.put((client, line.decode("utf-8", "replace")))
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)

    def _send(self, client: socket.socket, msg: dict) -> None:
        try:
            client.sendall((json.dumps(msg) + "\n").encode())
        except OSError:
            with self._clients_lock:
                if client in self._clients:
                    self._clients.remove(client)

    def broadcast(self, msg: dict) -> None:
        with self._clients_lock:
            targets = list(self._clients)
        for c in targets:
            self._send(c, msg)

    def _map_message(self) -> list:
        return [[list(map(float, lo)), list(map(float, hi))] for _, lo, hi in self.boxes]

    # -- protocol -----------------------------------------------------------

    def _handle(self, client: socket.socket, raw: str) -> None:
        try:
            msg = json.loads(raw)
            kind = msg["type"]
        except (json.JSONDecodeError, TypeError, KeyError):
            self._send(client, {"type": "status", "code": "bad_message",
                                "message": "expected JSON object with a type field"})
            return
        if kind == "goal":
            try:
                goal = np.array([float(msg["x"]), float(msg["y"]), float(msg["z"])])
            except (KeyError, TypeError, ValueError):
                self._send(client, {"type": "status", "code": "bad_message",
                                    "message": "goal needs numeric x, y, z"})
                return
            self.goal = goal
            self.scheduled = None
            self._replan()
        elif kind == "reset":
            self.state = RobotState(self.home.copy())
            self.goal = None
            self.active = None
            self.scheduled = None
            self.prev_outcome = None
            self.broadcast({"type": "status", "code": "reset"})
        elif kind == "load_map":
            self._load_map(client, msg.get("name", ""))
        else:
            self._send(client, {"type": "status", "code": "bad_message",
                                "message": f"unknown type {kind!r}"})

    def _load_map(self, client: socket.socket, name: str) -> None:
        if self.map_dir is None:
            self._send(client, {"type": "status", "code": "error",
                                "message": "no map directory configured"})
            return
        target = (self.map_dir / name).resolve()
        if self.map_dir.resolve() not in target.parents or target.suffix != ".txt":
            self._send(client, {"type": "status", "code": "error",
                                "message": "map name must be a .txt inside the map directory"})
            return
        try:
            grid, boxes = load_map_file(target, self.cfg.planner.inflation_radius)
        except (OSError, ValueError) as exc:
            self._send(client, {"type": "status", "code": "error", "message": str(exc)})
            return
        self.grid = grid
        self.boxes = boxes
        self.grid.search_view(self.cfg.planner.pipe_radius + self.grid.resolution / 4.0)
        self.broadcast({"type": "map", "boxes": self._map_message()})
        # the active trajectory may now cut through new obstacles
        if self.active is not None and not pipe_collision_check(
            self.active[1], self.grid, self.cfg.planner.pipe_radius
        ):
            self._replan()

    # -- simulation ---------------------------------------------------------

    def _robot_state_at(self, wall: float) -> RobotState:
        if self.active is None:
            return self.state
        t0, traj = self.active
        lo, hi = traj.domain()
        tau = min(lo + (wall - t0), hi)
        return RobotState(
            traj.evaluate(tau), traj.evaluate(tau, 1), traj.evaluate(tau, 2)
        )

    def _replan(self) -> None:
        """Plan toward the current goal, switching at a knot of the active
        trajectory so the splice is exact."""
        if self.goal is None:
            return
        now = time.monotonic()
        if self.active is None:
            switch_wall = now
            boundary = self.state
        else:
            t0, traj = self.active
            lo, hi = traj.domain()
            tau = lo + (now + LOOKAHEAD - t0)
            knot = lo + np.ceil(max(tau - lo, 0.0) / traj.dt) * traj.dt
            if knot >= hi:
                knot = hi
            switch_wall = t0 + (knot - lo)
            boundary = self._robot_state_at(switch_wall)
        outcome = plan(boundary, self.goal, self.grid, self.cfg, prev=self.prev_outcome)
        self.last_replan = time.monotonic()
        if not outcome.succeeded:
            self.broadcast({"type": "status", "code": "plan_failed",
                            "message": outcome.message})
            return
        self.prev_outcome = outcome
        self.scheduled = (max(switch_wall, time.monotonic()), outcome.trajectory)
        self.broadcast({
            "type": "trajectory",
            "dt": outcome.trajectory.dt,
            "ctrl_pts": outcome.trajectory.ctrl_pts.tolist(),
            "status": outcome.status,
        })
        self.broadcast({"type": "status", "code": outcome.status})

    def _goal_reached(self) -> bool:
        return (
            self.goal is not None
            and float(np.linalg.norm(self.state.position - self.goal)) < 0.15
            and float(np.linalg.norm(self.state.velocity)) < 0.1
        )

    def _main_loop(self) -> None:
        start_wall = time.monotonic()
        while not self._stop.is_set():
            tick_begin = time.monotonic()
            try:
                while True:
                    client, raw = self._inbox.get_nowait()
                    self._handle(client, raw)
            except Empty:
                pass

            now = time.monotonic()
            if self.scheduled is not None and now >= self.scheduled[0]:
                self.active = self.scheduled
                self.scheduled = None
            self.state = self._robot_state_at(now)
            if (
                self.goal is not None
                and not self._goal_reached()
                and self.scheduled is None
                and now - self.last_replan >= self.cfg.planner.replan_period
            ):
                self._replan()

            self.broadcast({
                "type": "state",
                "t": now - start_wall,
                "pos": [float(v) for v in self.state.position],
                "vel": [float(v) for v in self.state.velocity],
            })
            elapsed = time.monotonic() - tick_begin
            time.sleep(max(TICK - elapsed, 0.0))


def run_service(cfg: Config, map_path, port: int, start=None) -> SimulationService:
    """Build the grid from a map file and serve until interrupted."""
    grid, boxes = load_map_file(map_path, cfg.planner.inflation_radius)
    if start is None:
        start = grid.origin + np.array(grid.dims) * grid.resolution * [0.15, 0.5, 0.5]
    service = SimulationService(
        grid, boxes, cfg, port=port, start=start, map_dir=Path(map_path).parent
    )
    service.start()
    log.info("simulation service listening on port %d", service.port)
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        service.stop()
    return service
