"""Uniform B-spline curves: evaluation, derivative curves, and fitting.

The trajectory representation used throughout the planner. Knots are
implicit and uniform (knot m sits at ``t0 + (m - degree) * dt``), so a
curve is fully described by its degree, knot interval, start time, and
control points. Evaluation uses the De Boor recursion, which for
uniform knots collapses to per-level constant denominators.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

_DOMAIN_EPS = 1e-9


@dataclass(frozen=True)
class UniformBSpline:
    """Uniform B-spline in R^3 (or R^d) defined by its control points.

    Immutable after construction; operations that change the curve
    return a new instance.
    """

    ctrl_pts: np.ndarray
    dt: float
    t0: float = 0.0
    degree: int = 3

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.ctrl_pts, dtype=float))
        object.__setattr__(self, "ctrl_pts", pts)
        if self.dt <= 0.0:
            raise ValueError(f"knot interval must be positive, got {self.dt}")
        if self.degree < 0:
            raise ValueError(f"degree must be non-negative, got {self.degree}")
        if len(pts) < self.degree + 1:
            raise ValueError(
                f"need at least degree+1={self.degree + 1} control points, got {len(pts)}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")

    @property
    def n_ctrl(self) -> int:
        return len(self.ctrl_pts)

    @property
    def duration(self) -> float:
        return (self.n_ctrl - self.degree) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    def domain(self) -> tuple[float, float]:
        """Valid evaluation interval [t0, t0 + (n_ctrl - degree) * dt]."""
        return self.t0, self.t_end

    def _clamp_time(self, t: np.ndarray) -> np.ndarray:
        lo, hi = self.domain()
        t = np.asarray(t, dtype=float)
        if np.any(t < lo - _DOMAIN_EPS) or np.any(t > hi + _DOMAIN_EPS):
            raise ValueError(f"time outside valid domain [{lo}, {hi}]")
        return np.clip(t, lo, hi)

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Evaluate the curve position (order 0) or its order-th time derivative.

        Accepts a scalar time or an array of times; returns shape (d,) or
        (n, d) accordingly. Times within 1e-9 of the domain endpoints are
        clamped onto the endpoint.
        """
        if order < 0 or order > self.degree:
            raise ValueError(f"derivative order must be in [0, {self.degree}], got {order}")
        spline = self if order == 0 else self.derivative_ctrl_points(order)
        scalar = np.isscalar(t) or np.ndim(t) == 0
        ts = np.atleast_1d(self._clamp_time(t))
        out = _de_boor(spline.ctrl_pts, spline.degree, spline.dt, spline.t0, ts)
        return out[0] if scalar else out

    def derivative_ctrl_points(self, k: int = 1) -> "UniformBSpline":
        """Derivative curve of order k (k in 1..degree), built by repeated
        first differences of the control points divided by dt.

        The result shares t0 and dt, has degree reduced by k, and one
        fewer control point per differentiation.
        """
        if k < 1 or k > self.degree:
            raise ValueError(f"derivative order must be in [1, {self.degree}], got {k}")
        pts = self.ctrl_pts
        for _ in range(k):
            pts = np.diff(pts, axis=0) / self.dt
        return UniformBSpline(pts, self.dt, self.t0, self.degree - k)

    def ctrl_point_tangent(self, i: int) -> np.ndarray:
        """Central-difference tangent (Q[i+1] - Q[i-1]) / (2 dt) at an
        interior control point."""
        if i < 1 or i > self.n_ctrl - 2:
            raise ValueError(f"tangent index must be in [1, {self.n_ctrl - 2}], got {i}")
        return (self.ctrl_pts[i + 1] - self.ctrl_pts[i - 1]) / (2.0 * self.dt)

    def with_dt(self, dt: float) -> "UniformBSpline":
        """Same control polygon on a stretched/compressed time axis."""
        return UniformBSpline(self.ctrl_pts, dt, self.t0, self.degree)

    def basis_row(self, t: float, order: int = 0) -> tuple[int, np.ndarray]:
        """Weights w and first index i0 such that the order-th derivative at t
        equals sum_j w[j] * ctrl_pts[i0 + j] (len(w) == degree + 1)."""
        if order < 0 or order > self.degree:
            raise ValueError(f"order must be in [0, {self.degree}], got {order}")
        t = float(self._clamp_time(t))
        return _basis_row(self.degree, self.dt, self.t0, self.n_ctrl, t, order)

    def basis_matrix(self, ts: np.ndarray, order: int = 0) -> np.ndarray:
        """Dense matrix W with W @ ctrl_pts = derivative-of-order samples at ts.

        Runs the vectorized De Boor recursion on identity "control points",
        differenced `order` times, so every row comes out in one pass.
        """
        if order < 0 or order > self.degree:
            raise ValueError(f"order must be in [0, {self.degree}], got {order}")
        ts = np.atleast_1d(self._clamp_time(ts))
        basis_ctrl = np.eye(self.n_ctrl)
        for _ in range(order):
            basis_ctrl = np.diff(basis_ctrl, axis=0) / self.dt
        return _de_boor(basis_ctrl, self.degree - order, self.dt, self.t0, ts)


def _span_index(degree: int, dt: float, t0: float, n_ctrl: int, ts: np.ndarray) -> np.ndarray:
    k = degree + np.floor((ts - t0) / dt).astype(int)
    return np.clip(k, degree, n_ctrl - 1)


def _de_boor(ctrl: np.ndarray, degree: int, dt: float, t0: float, ts: np.ndarray) -> np.ndarray:
    """Vectorized De Boor recursion on an implicit uniform knot grid."""
    k = _span_index(degree, dt, t0, len(ctrl), ts)
    idx = k[:, None] - degree + np.arange(degree + 1)[None, :]
    d = ctrl[idx].astype(float)  # (n, degree+1, dim)
    for r in range(1, degree + 1):
        for j in range(degree, r - 1, -1):
            # knot at index j + k - degree is t0 + (j + k - 2*degree) * dt
            left = t0 + (j + k - 2 * degree) * dt
            alpha = (ts - left) / ((degree - r + 1) * dt)
            d[:, j] = (1.0 - alpha)[:, None] * d[:, j - 1] + alpha[:, None] * d[:, j]
    return d[:, degree]


def _basis_values(degree: int, dt: float, t0: float, span: int, t: float) -> np.ndarray:
    """Nonzero basis values N[span-degree .. span] at t (Cox-de Boor)."""
    n = np.zeros(degree + 1)
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    n[0] = 1.0
    knot = lambda m: t0 + (m - degree) * dt
    for j in range(1, degree + 1):
        left[j] = t - knot(span + 1 - j)
        right[j] = knot(span + j) - t
        saved = 0.0
        for r in range(j):
            tmp = n[r] / (right[r + 1] + left[j - r])
            n[r] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        n[j] = saved
    return n


def _basis_row(
    degree: int, dt: float, t0: float, n_ctrl: int, t: float, order: int
) -> tuple[int, np.ndarray]:
    span = int(_span_index(degree, dt, t0, n_ctrl, np.array([t]))[0])
    i0 = span - degree
    base_deg = degree - order
    # weights over the order-th difference of the control points
    w = _basis_values(base_deg, dt, t0, span - order, t)
    # push the differences back onto the original control points
    for _ in range(order):
        nxt = np.zeros(len(w) + 1)
        nxt[:-1] -= w
        nxt[1:] += w
        w = nxt / dt
    return i0, w


def boundary_constrained_lsq_fit(
    samples: list[tuple[float, np.ndarray]],
    n_ctrl: int,
    dt: float,
    boundary: dict,
    degree: int = 3,
    t0: float = 0.0,
) -> UniformBSpline:
    """Least-squares spline fit with exact endpoint state constraints.

    Minimizes the squared residual against the samples subject to the
    curve reproducing position/velocity/acceleration exactly at both
    domain endpoints, solved per axis through the KKT system of the
    equality-constrained linear least-squares problem.

    boundary keys: start_pos, start_vel, start_acc, end_pos, end_vel,
    end_acc (3-vectors).
    """
    if n_ctrl < degree + 1:
        raise ValueError(f"n_ctrl must be at least degree+1={degree + 1}")
    times = np.array([s[0] for s in samples], dtype=float)
    values = np.array([s[1] for s in samples], dtype=float)
    if values.ndim != 2:
        raise ValueError("samples must be (time, point) pairs")
    for key in ("start_pos", "start_vel", "start_acc", "end_pos", "end_vel", "end_acc"):
        if not np.all(np.isfinite(boundary[key])):
            raise ValueError(f"boundary state {key} must be finite")

    proto = UniformBSpline(np.zeros((n_ctrl, values.shape[1])), dt, t0, degree)
    A = proto.basis_matrix(times, order=0)
    t_end = proto.t_end
    C = np.vstack(
        [
            proto.basis_matrix(np.array([t0]), order=0),
            proto.basis_matrix(np.array([t0]), order=1),
            proto.basis_matrix(np.array([t0]), order=2),
            proto.basis_matrix(np.array([t_end]), order=0),
            proto.basis_matrix(np.array([t_end]), order=1),
            proto.basis_matrix(np.array([t_end]), order=2),
        ]
    )
    D = np.array(
        [
            boundary["start_pos"],
            boundary["start_vel"],
            boundary["start_acc"],
            boundary["end_pos"],
            boundary["end_vel"],
            boundary["end_acc"],
        ],
        dtype=float,
    )

    n_con = C.shape[0]
    kkt = np.zeros((n_ctrl + n_con, n_ctrl + n_con))
    kkt[:n_ctrl, :n_ctrl] = 2.0 * A.T @ A
    kkt[:n_ctrl, n_ctrl:] = C.T
    kkt[n_ctrl:, :n_ctrl] = C
    if np.linalg.matrix_rank(kkt) < n_ctrl + n_con:
        raise np.linalg.LinAlgError(
            "fit is underdetermined: too few samples for the requested control points"
        )
    rhs = np.zeros((n_ctrl + n_con, values.shape[1]))
    rhs[:n_ctrl] = 2.0 * A.T @ values
    rhs[n_ctrl:] = D
    sol = np.linalg.solve(kkt, rhs)
    return UniformBSpline(sol[:n_ctrl], dt, t0, degree)


def boundary_ctrl_points(pos, vel, acc, dt: float) -> np.ndarray:
    """Three consecutive cubic control points reproducing an endpoint state.

    Inverts pos = (Q0 + 4 Q1 + Q2)/6, vel = (Q2 - Q0)/(2 dt),
    acc = (Q0 - 2 Q1 + Q2)/dt^2.
    """
    pos = np.asarray(pos, dtype=float)
    vel = np.asarray(vel, dtype=float)
    acc = np.asarray(acc, dtype=float)
    q1 = pos - acc * dt * dt / 6.0
    q0 = q1 - vel * dt + acc * dt * dt / 2.0
    q2 = q1 + vel * dt + acc * dt * dt / 2.0
    return np.stack([q0, q1, q2])


def write_trajectory_csv(spline: UniformBSpline, path, rate: float = 100.0) -> None:
    """Sample position/velocity/acceleration at a fixed rate into CSV.

    Columns: t,x,y,z,vx,vy,vz,ax,ay,az.
    """
    lo, hi = spline.domain()
    n = max(int(np.floor((hi - lo) * rate)) + 1, 2)
    ts = lo + np.arange(n) / rate
    ts = np.clip(ts, lo, hi)
    if ts[-1] < hi - 1e-12:
        ts = np.append(ts, hi)
    pos = spline.evaluate(ts, 0)
    vel = spline.evaluate(ts, 1)
    acc = spline.evaluate(ts, 2)

    def _write(fh):
        fh.write("t,x,y,z,vx,vy,vz,ax,ay,az\n")
        for i, t in enumerate(ts):
            row = np.concatenate([[t], pos[i], vel[i], acc[i]])
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")

    if isinstance(path, io.TextIOBase):
        _write(path)
    else:
        with open(path, "w") as fh:
            _write(fh)
