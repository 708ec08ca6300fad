import numpy as np
import pytest

from reboundplan.bspline import UniformBSpline
from reboundplan.config import PenaltyConfig
from reboundplan.objective import (
    CostGrad,
    FitReference,
    PairArrays,
    collision,
    collision_scalar,
    feasibility,
    fitness,
    limit_coeffs,
    limit_scalar,
    smoothness,
    total_rebound_cost,
    total_refine_cost,
)
from reboundplan.rebound import ControlPointCtx, PVPair


def numeric_grad(fun, q, h=1e-6):
    g = np.zeros_like(q)
    for i in range(q.shape[0]):
        for k in range(q.shape[1]):
            qp, qm = q.copy(), q.copy()
            qp[i, k] += h
            qm[i, k] -= h
            g[i, k] = (fun(qp) - fun(qm)) / (2 * h)
    return g


def grad_close(analytic, numeric, tol=1e-5):
    denom = max(np.linalg.norm(numeric), 1.0)
    return np.linalg.norm(analytic - numeric) / denom < tol


def random_pairs(rng, q, n_per_point=2):
    pts = [ControlPointCtx(qi) for qi in q]
    for ctx in pts:
        for _ in range(rng.integers(0, n_per_point + 1)):
            p = ctx.position + rng.normal(scale=0.4, size=3)
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            ctx.pairs.append(PVPair(p, v))
    return PairArrays.from_points(pts)


def test_smoothness_zero_on_straight_line():
    q = np.array([[0.3 * i, -0.1 * i, 0.2 * i] for i in range(8)])
    res = smoothness(q, 0.5)
    assert res.value == pytest.approx(0.0, abs=1e-18)
    assert np.allclose(res.grad, 0.0)


def test_smoothness_single_term():
    q = np.array([[0.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]])
    res = smoothness(q, 1.0)
    assert res.value == pytest.approx(1.0)


def test_smoothness_gradient_fd():
    rng = np.random.default_rng(1)
    for _ in range(5):
        q = rng.normal(size=(9, 3))
        dt = float(rng.uniform(0.2, 0.7))
        res = smoothness(q, dt)
        num = numeric_grad(lambda x: smoothness(x, dt).value, q)
        assert grad_close(res.grad, num, 1e-6)


def test_collision_branch_values():
    s_f = 0.5
    # d = s_f -> c = 0: exactly at the activation edge
    v, dv = collision_scalar(np.array([0.0]), s_f)
    assert v[0] == 0.0 and dv[0] == 0.0
    # d = 0 -> c = s_f: both adjacent branches give s_f^3
    v, _ = collision_scalar(np.array([s_f]), s_f)
    assert v[0] == pytest.approx(s_f**3)
    assert 3 * s_f * s_f**2 - 3 * s_f**2 * s_f + s_f**3 == pytest.approx(s_f**3)
    # d = -0.5 -> c = 1.0 on the far branch
    v, dv = collision_scalar(np.array([1.0]), s_f)
    assert v[0] == pytest.approx(0.875)
    assert -dv[0] == pytest.approx(-2.25)


def test_collision_gradient_along_direction():
    q = np.zeros((1, 3))
    pts = [ControlPointCtx(q[0], pairs=[PVPair([0.3, 0, 0], [1.0, 0, 0])])]
    pairs = PairArrays.from_points(pts)
    res = collision(q, pairs, s_f=0.5)
    # single active pair: gradient exactly parallel to v
    g = res.grad[0]
    assert abs(g[1]) == 0.0 and abs(g[2]) == 0.0
    assert g[0] < 0.0  # pushes the point along +v to increase d


def test_collision_gradient_fd():
    rng = np.random.default_rng(2)
    for _ in range(5):
        q = rng.normal(scale=0.6, size=(7, 3))
        pairs = random_pairs(rng, q)
        res = collision(q, pairs, s_f=0.4)
        num = numeric_grad(lambda x: collision(x, pairs, 0.4).value, q)
        assert grad_close(res.grad, num, 1e-5)


def test_limit_scalar_dead_zone_and_cubic():
    cfg = PenaltyConfig()
    thr = cfg.lambda_elastic * cfg.v_max
    xs = np.linspace(-thr, thr, 11)
    v, dv = limit_scalar(xs, cfg.v_max, cfg.lambda_elastic, cfg.cj_ratio)
    assert np.all(v == 0.0) and np.all(dv == 0.0)
    v, _ = limit_scalar(np.array([thr + 0.1]), cfg.v_max, cfg.lambda_elastic, cfg.cj_ratio)
    assert v[0] == pytest.approx(1e-3)


def branch_probe(fun, x0, h=1e-2, side=+1):
    """Exact cubic fit on four one-sided samples: value/d1/d2 at x0."""
    xs = x0 + side * h * np.arange(1, 5)
    ys = fun(xs)
    coef = np.polyfit(xs - x0, ys, 3)
    p = np.poly1d(coef)
    return p(0.0), p.deriv(1)(0.0), p.deriv(2)(0.0)


def test_limit_scalar_c2_continuity():
    cfg = PenaltyConfig()
    fun = lambda xs: limit_scalar(xs, cfg.v_max, cfg.lambda_elastic, cfg.cj_ratio)[0]
    c_j = cfg.cj_ratio * cfg.v_max
    thr = cfg.lambda_elastic * cfg.v_max
    for x0 in (-c_j, -thr, thr, c_j):
        left = branch_probe(fun, x0, side=-1)
        right = branch_probe(fun, x0, side=+1)
        for l, r in zip(left, right):
            assert abs(l - r) < 1e-9


def test_collision_c2_continuity():
    s_f = 0.37
    fun = lambda cs: collision_scalar(cs, s_f)[0]
    for c0 in (0.0, s_f):
        left = branch_probe(fun, c0, side=-1)
        right = branch_probe(fun, c0, side=+1)
        for l, r in zip(left, right):
            assert abs(l - r) < 1e-9


def test_limit_quadratic_coeff_continuity_equations():
    cfg = PenaltyConfig()
    cm, lam = cfg.a_max, cfg.lambda_elastic
    c_j, a2, b2, c2 = limit_coeffs(cm, lam, cfg.cj_ratio)
    m = c_j - lam * cm
    assert a2 * c_j**2 + b2 * c_j + c2 == pytest.approx(m**3, abs=1e-9)
    assert 2 * a2 * c_j + b2 == pytest.approx(3 * m**2, abs=1e-9)
    assert 2 * a2 == pytest.approx(6 * m, abs=1e-9)


def test_feasibility_dead_zone_zero():
    cfg = PenaltyConfig()
    # slow straight line: all derivative control points well under limits
    q = np.array([[0.05 * i, 0.0, 0.0] for i in range(8)])
    res = feasibility(q, 1.0, cfg)
    assert res.value == 0.0
    assert np.allclose(res.grad, 0.0)


def test_feasibility_config_error():
    cfg = PenaltyConfig(cj_ratio=0.5)
    with pytest.raises(ValueError):
        limit_coeffs(cfg.v_max, cfg.lambda_elastic, cfg.cj_ratio)


def test_feasibility_gradient_fd():
    rng = np.random.default_rng(3)
    cfg = PenaltyConfig()
    for _ in range(5):
        q = np.cumsum(rng.normal(scale=0.5, size=(8, 3)), axis=0)
        dt = 0.25
        res = feasibility(q, dt, cfg)
        num = numeric_grad(lambda x: feasibility(x, dt, cfg).value, q)
        assert grad_close(res.grad, num, 1e-5)


def make_safe_spline(rng, n_ctrl=9, dt=0.4):
    pts = np.cumsum(rng.normal(scale=0.4, size=(n_ctrl, 3)), axis=0)
    return UniformBSpline(pts, dt)


def test_fitness_zero_on_identical_curve():
    rng = np.random.default_rng(4)
    safe = make_safe_spline(rng)
    ref = FitReference.build(safe, safe.dt)
    res = fitness(safe.ctrl_pts, ref, PenaltyConfig())
    assert res.value == pytest.approx(0.0, abs=1e-18)
    assert np.allclose(res.grad, 0.0, atol=1e-12)


def test_fitness_orthogonal_decomposition_value():
    # one sample with displacement (1, 1, 0) against tangent (1, 0, 0):
    # axial part 1 with semi-axis 2, radial part 1 with semi-axis 1
    ref = FitReference(
        basis=np.array([[1.0]]),
        targets=np.zeros((1, 3)),
        tangents=np.array([[1.0, 0.0, 0.0]]),
    )
    cfg = PenaltyConfig(fit_a=2.0, fit_b=1.0)
    res = fitness(np.array([[1.0, 1.0, 0.0]]), ref, cfg)
    assert res.value == pytest.approx(0.25 + 1.0)


def test_fitness_gradient_fd():
    rng = np.random.default_rng(5)
    cfg = PenaltyConfig()
    for _ in range(5):
        safe = make_safe_spline(rng)
        ref = FitReference.build(safe, safe.dt * 1.7)
        q = safe.ctrl_pts + rng.normal(scale=0.1, size=safe.ctrl_pts.shape)
        res = fitness(q, ref, cfg)
        num = numeric_grad(lambda x: fitness(x, ref, cfg).value, q)
        assert grad_close(res.grad, num, 1e-5)


def test_total_rebound_cost_linearity_and_fixed_rows():
    rng = np.random.default_rng(6)
    cfg = PenaltyConfig()
    q = np.cumsum(rng.normal(scale=0.5, size=(9, 3)), axis=0)
    pairs = random_pairs(rng, q)
    dt = 0.3
    fixed = np.zeros(9, dtype=bool)
    fixed[:3] = fixed[-3:] = True
    total = total_rebound_cost(q, dt, pairs, cfg, fixed)
    s = smoothness(q, dt)
    c = collision(q, pairs, cfg.s_f)
    d = feasibility(q, dt, cfg)
    manual = (
        cfg.lambda_smooth * s.value
        + cfg.lambda_collision * c.value
        + cfg.lambda_feasible * d.value
    )
    assert total.value == pytest.approx(manual, rel=1e-12)
    assert np.all(total.grad[:3] == 0.0) and np.all(total.grad[-3:] == 0.0)


def test_total_cost_zero_weights():
    cfg = PenaltyConfig(lambda_smooth=0.0, lambda_collision=0.0, lambda_feasible=0.0)
    rng = np.random.default_rng(7)
    q = rng.normal(size=(8, 3))
    total = total_rebound_cost(q, 0.4, PairArrays.from_points([]), cfg)
    assert total.value == 0.0


def test_total_cost_zero_for_straight_feasible_no_pairs():
    cfg = PenaltyConfig()
    # power-of-two spacing keeps the differences exactly representable
    q = np.array([[0.125 * i, 0.0, 0.0] for i in range(10)])
    total = total_rebound_cost(q, 0.5, PairArrays.from_points([]), cfg)
    assert total.value == 0.0
    assert np.allclose(total.grad, 0.0)


def test_total_refine_cost_fd():
    rng = np.random.default_rng(8)
    cfg = PenaltyConfig()
    safe = make_safe_spline(rng)
    ref = FitReference.build(safe, safe.dt * 1.4)
    q = safe.ctrl_pts + rng.normal(scale=0.05, size=safe.ctrl_pts.shape)
    dt_new = safe.dt * 1.4
    res = total_refine_cost(q, dt_new, ref, cfg)
    num = numeric_grad(lambda x: total_refine_cost(x, dt_new, ref, cfg).value, q)
    assert grad_close(res.grad, num, 1e-5)
    assert res.value >= 0.0


def test_refine_cost_zero_fit_for_stretched_copy():
    rng = np.random.default_rng(9)
    safe = make_safe_spline(rng)
    ref = FitReference.build(safe, safe.dt * 2.0)
    res = fitness(safe.ctrl_pts, ref, PenaltyConfig())
    # identical control polygon on the stretched clock: samples coincide
    assert res.value == pytest.approx(0.0, abs=1e-16)


def test_costs_nonnegative_random():
    rng = np.random.default_rng(10)
    cfg = PenaltyConfig()
    for _ in range(20):
        q = rng.normal(size=(8, 3))
        pairs = random_pairs(rng, q)
        assert smoothness(q, 0.4).value >= 0.0
        assert collision(q, pairs, cfg.s_f).value >= 0.0
        assert feasibility(q, 0.4, cfg).value >= 0.0
