"""Penalty terms and their analytic gradients over free control points.

All terms operate directly on the control points: by the convex hull
property, bounding the control points of the derivative curves bounds
the whole trajectory, so no time integration is needed. Every piecewise
penalty is twice continuously differentiable at its branch points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline import UniformBSpline
from .config import PenaltyConfig
from .rebound import ControlPointCtx


@dataclass
class CostGrad:
    """Scalar cost plus its gradient per control point (rows of fixed
    points are zeroed by the combined costs)."""

    value: float
    grad: np.ndarray  # (n_ctrl, 3)


@dataclass
class PairArrays:
    """Flattened pair set for vectorized collision evaluation."""

    owner: np.ndarray    # (n_pairs,) control point index
    anchor: np.ndarray   # (n_pairs, 3)
    direction: np.ndarray  # (n_pairs, 3) unit

    @classmethod
    def from_points(cls, points: list[ControlPointCtx]) -> "PairArrays":
        owner, anchor, direction = [], [], []
        for i, ctx in enumerate(points):
            for pair in ctx.pairs:
                owner.append(i)
                anchor.append(pair.p)
                direction.append(pair.v)
        if not owner:
            return cls(np.zeros(0, dtype=int), np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(np.array(owner), np.array(anchor), np.array(direction))

    def __len__(self) -> int:
        return len(self.owner)


def _derivative_stacks(q: np.ndarray, dt: float):
    v = np.diff(q, axis=0) / dt
    a = np.diff(v, axis=0) / dt
    j = np.diff(a, axis=0) / dt
    return v, a, j


def smoothness(q: np.ndarray, dt: float) -> CostGrad:
    """Sum of squared acceleration and jerk control points (no time weight)."""
    q = np.asarray(q, dtype=float)
    _, a, j = _derivative_stacks(q, dt)
    value = float(np.sum(a * a) + np.sum(j * j))
    grad = np.zeros_like(q)
    ga = 2.0 * a / dt**2
    grad[:-2] += ga
    grad[1:-1] += -2.0 * ga
    grad[2:] += ga
    if len(j):
        gj = 2.0 * j / dt**3
        grad[:-3] += -gj
        grad[1:-2] += 3.0 * gj
        grad[2:-1] += -3.0 * gj
        grad[3:] += gj
    return CostGrad(value, grad)


def collision_scalar(c: np.ndarray, s_f: float):
    """Piecewise clearance penalty of c = s_f - d and its derivative in c.

    Cubic from the moment clearance is violated, blending into a
    slope-limited quadratic once the point is deeper than s_f, so the
    repulsion stays bounded far inside obstacles.
    """
    c = np.asarray(c, dtype=float)
    value = np.zeros_like(c)
    dvalue = np.zeros_like(c)
    mid = (c > 0.0) & (c <= s_f)
    far = c > s_f
    value[mid] = c[mid] ** 3
    dvalue[mid] = 3.0 * c[mid] ** 2
    value[far] = 3.0 * s_f * c[far] ** 2 - 3.0 * s_f**2 * c[far] + s_f**3
    dvalue[far] = 6.0 * s_f * c[far] - 3.0 * s_f**2
    return value, dvalue


def collision(q: np.ndarray, pairs: PairArrays, s_f: float) -> CostGrad:
    """Total clearance penalty over every pair of every control point."""
    q = np.asarray(q, dtype=float)
    grad = np.zeros_like(q)
    if len(pairs) == 0:
        return CostGrad(0.0, grad)
    d = np.einsum("ij,ij->i", q[pairs.owner] - pairs.anchor, pairs.direction)
    c = s_f - d
    value, dvalue = collision_scalar(c, s_f)
    # dc/dQ = -v, so each active pair pulls the point along +v
    contrib = -dvalue[:, None] * pairs.direction
    np.add.at(grad, pairs.owner, contrib)
    return CostGrad(float(np.sum(value)), grad)


def limit_coeffs(c_m: float, lam: float, cj_ratio: float):
    """Quadratic tail coefficients giving C2 continuity at +/- c_j."""
    c_j = cj_ratio * c_m
    margin = c_j - lam * c_m
    if margin <= 0:
        raise ValueError("cj_ratio must exceed lambda_elastic")
    a2 = 3.0 * margin
    b2 = 3.0 * margin**2 - 2.0 * a2 * c_j
    c2 = margin**3 - a2 * c_j**2 - b2 * c_j
    return c_j, a2, b2, c2


def limit_scalar(x: np.ndarray, c_m: float, lam: float, cj_ratio: float):
    """Per-axis limit penalty: dead zone inside lam*c_m, cubic up to c_j,
    then a slope-limited quadratic; returns value and derivative arrays.

    Uses the closed form u^3 + 3 m^2 z + 3 m z^2 with u the clamped cubic
    progress, z the overshoot past c_j, and m = c_j - lam*c_m, which is the
    C2-matched quadratic tail written around the branch point.
    """
    x = np.asarray(x, dtype=float)
    thr = lam * c_m
    margin = cj_ratio * c_m - thr
    if margin <= 0:
        raise ValueError("cj_ratio must exceed lambda_elastic")
    ax = np.abs(x)
    u = np.clip(ax - thr, 0.0, margin)
    z = np.maximum(ax - cj_ratio * c_m, 0.0)
    value = u**3 + 3.0 * margin**2 * z + 3.0 * margin * z**2
    dvalue = np.sign(x) * (3.0 * u**2 + 6.0 * margin * z)
    return value, dvalue


def feasibility(q: np.ndarray, dt: float, cfg: PenaltyConfig) -> CostGrad:
    """Per-axis limit penalties on the velocity/acceleration/jerk control
    points, chained through the (1/dt)-difference stacks."""
    q = np.asarray(q, dtype=float)
    v, a, j = _derivative_stacks(q, dt)
    grad = np.zeros_like(q)
    total = 0.0

    fv, dfv = limit_scalar(v, cfg.v_max, cfg.lambda_elastic, cfg.cj_ratio)
    total += cfg.w_v * float(np.sum(fv))
    gv = cfg.w_v * dfv / dt
    grad[:-1] -= gv
    grad[1:] += gv

    fa, dfa = limit_scalar(a, cfg.a_max, cfg.lambda_elastic, cfg.cj_ratio)
    total += cfg.w_a * float(np.sum(fa))
    ga = cfg.w_a * dfa / dt**2
    grad[:-2] += ga
    grad[1:-1] -= 2.0 * ga
    grad[2:] += ga

    if len(j):
        fj, dfj = limit_scalar(j, cfg.j_max, cfg.lambda_elastic, cfg.cj_ratio)
        total += cfg.w_j * float(np.sum(fj))
        gj = cfg.w_j * dfj / dt**3
        grad[:-3] -= gj
        grad[1:-2] += 3.0 * gj
        grad[2:-1] -= 3.0 * gj
        grad[3:] += gj
    return CostGrad(total, grad)


@dataclass
class FitReference:
    """Precomputed target samples and basis of the anisotropic fit.

    Pairs sample k of the re-timed curve (basis matrix row k at k*dt_new)
    with the safe curve's point and unit tangent at k*dt_old; both curves
    are walked knot by knot so matched samples share the normalized time.
    """

    basis: np.ndarray      # (n_samples, n_ctrl) of the re-timed curve
    targets: np.ndarray    # (n_samples, 3) points on the safe curve
    tangents: np.ndarray   # (n_samples, 3) unit tangents of the safe curve

    @classmethod
    def build(cls, safe: UniformBSpline, dt_new: float) -> "FitReference":
        n_samples = safe.n_ctrl - safe.degree + 1
        ks = np.arange(n_samples)
        t_old = safe.t0 + ks * safe.dt
        targets = safe.evaluate(t_old, 0)
        vel = safe.evaluate(t_old, 1)
        speed = np.linalg.norm(vel, axis=1)
        ok = speed > 1e-9
        if not np.any(ok):
            raise ValueError("safe trajectory has no sample with nonzero speed")
        tangents = np.zeros_like(vel)
        tangents[ok] = vel[ok] / speed[ok, None]
        if not np.all(ok):
            # inherit the nearest moving sample's direction
            idx_ok = np.nonzero(ok)[0]
            for i in np.nonzero(~ok)[0]:
                tangents[i] = tangents[idx_ok[np.argmin(np.abs(idx_ok - i))]]
        proto = UniformBSpline(
            np.zeros((safe.n_ctrl, 3)), dt_new, safe.t0, safe.degree
        )
        basis = proto.basis_matrix(safe.t0 + ks * dt_new, order=0)
        return cls(basis, targets, tangents)


def fitness(q: np.ndarray, ref: FitReference, cfg: PenaltyConfig) -> CostGrad:
    """Mean anisotropic displacement penalty between matched samples.

    Displacement from the safe curve splits into an axial part along its
    tangent (weak penalty, semi-axis fit_a) and a radial part (strong
    penalty, semi-axis fit_b).
    """
    q = np.asarray(q, dtype=float)
    pos = ref.basis @ q
    disp = pos - ref.targets
    d_a = np.einsum("ij,ij->i", disp, ref.tangents)
    d_r_sq = np.einsum("ij,ij->i", disp, disp) - d_a**2
    n = len(disp)
    a2, b2 = cfg.fit_a**2, cfg.fit_b**2
    value = float(np.sum(d_a**2 / a2 + np.clip(d_r_sq, 0.0, None) / b2) / n)
    dd = (2.0 / n) * ((1.0 / a2 - 1.0 / b2) * d_a[:, None] * ref.tangents + disp / b2)
    grad = ref.basis.T @ dd
    return CostGrad(value, grad)


def _zero_fixed(grad: np.ndarray, fixed_mask) -> np.ndarray:
    if fixed_mask is not None:
        grad[np.asarray(fixed_mask, dtype=bool)] = 0.0
    return grad


def total_rebound_cost(
    q: np.ndarray,
    dt: float,
    pairs: PairArrays,
    cfg: PenaltyConfig,
    fixed_mask=None,
) -> CostGrad:
    """Deformation objective: smoothness + collision + feasibility."""
    s = smoothness(q, dt)
    c = collision(q, pairs, cfg.s_f)
    d = feasibility(q, dt, cfg)
    value = (
        cfg.lambda_smooth * s.value
        + cfg.lambda_collision * c.value
        + cfg.lambda_feasible * d.value
    )
    grad = (
        cfg.lambda_smooth * s.grad
        + cfg.lambda_collision * c.grad
        + cfg.lambda_feasible * d.grad
    )
    return CostGrad(value, _zero_fixed(grad, fixed_mask))


def total_refine_cost(
    q: np.ndarray,
    dt: float,
    ref: FitReference,
    cfg: PenaltyConfig,
    fixed_mask=None,
) -> CostGrad:
    """Refinement objective: smoothness + feasibility + anisotropic fit."""
    s = smoothness(q, dt)
    d = feasibility(q, dt, cfg)
    f = fitness(q, ref, cfg)
    value = (
        cfg.lambda_smooth * s.value
        + cfg.lambda_feasible * d.value
        + cfg.lambda_fit * f.value
    )
    grad = (
        cfg.lambda_smooth * s.grad
        + cfg.lambda_feasible * d.grad
        + cfg.lambda_fit * f.grad
    )
    return CostGrad(value, _zero_fixed(grad, fixed_mask))
