import numpy as np
import pytest

from reboundplan.bench import (
    BenchmarkSpec,
    energy_between,
    format_csv,
    gen_random_map,
    length_between,
    metrics,
    run_benchmark,
)
from reboundplan.bspline import UniformBSpline


def test_gen_map_zero_density_empty():
    spec = BenchmarkSpec(density=0.0, seed=3)
    grid, boxes = gen_random_map(spec)
    assert not grid.occupancy.any()
    assert boxes == []


def test_gen_map_deterministic():
    spec = BenchmarkSpec(density=0.3, seed=7)
    g1, b1 = gen_random_map(spec)
    g2, b2 = gen_random_map(spec)
    assert np.array_equal(g1.occupancy, g2.occupancy)
    assert len(b1) == len(b2)


def test_gen_map_density_statistics():
    # Poisson placement: accepted-count mean within 10% of the request
    # (clearance discs remove only a few percent of the arena)
    from reboundplan.bench import sample_cylinders

    area = BenchmarkSpec().arena[0] * BenchmarkSpec().arena[1]
    counts = [
        len(sample_cylinders(BenchmarkSpec(density=0.25, seed=seed)))
        for seed in range(100)
    ]
    measured = np.mean(counts) / area
    assert abs(measured - 0.25) / 0.25 < 0.10


def test_gen_map_keeps_clearance_discs():
    spec = BenchmarkSpec(density=0.5, seed=11)
    grid, _ = gen_random_map(spec)
    for anchor in (spec.start, spec.goal):
        assert not grid.clearance_violated(np.array(anchor)[None, :], 0.3)


def test_gen_map_rejects_bad_arena():
    spec = BenchmarkSpec(arena=(1.0, 0.6, 1.0), start=(0.1, 0.3, 0.5), goal=(0.9, 0.3, 0.5))
    with pytest.raises(ValueError):
        gen_random_map(spec)


def test_metrics_straight_constant_velocity():
    pts = np.array([[0.5 * i, 0.0, 0.0] for i in range(12)])
    sp = UniformBSpline(pts, 0.5)
    m = metrics(sp)
    assert m.energy == pytest.approx(0.0, abs=1e-12)
    assert m.flight_time == pytest.approx(sp.duration)
    assert m.v_avg == pytest.approx(1.0, rel=1e-6)


def test_metrics_length_of_straight_line():
    # 5 m straight trajectory
    pts = np.array([[0.5 * i, 0.0, 0.0] for i in range(13)])
    sp = UniformBSpline(pts, 0.4)
    lo, hi = sp.domain()
    start = sp.evaluate(lo)
    end = sp.evaluate(hi)
    measured = length_between(sp, lo, hi)
    assert measured == pytest.approx(np.linalg.norm(end - start), abs=1e-6)


def test_energy_quadrature_matches_closed_form():
    rng = np.random.default_rng(5)
    for _ in range(10):
        pts = np.cumsum(rng.normal(scale=0.4, size=(9, 3)), axis=0)
        sp = UniformBSpline(pts, 0.3)
        lo, hi = sp.domain()
        quad = energy_between(sp, lo, hi)
        jerk = sp.derivative_ctrl_points(3).ctrl_pts
        closed = float(np.sum(jerk * jerk)) * sp.dt
        assert quad == pytest.approx(closed, rel=1e-6)


def test_run_benchmark_zero_density_all_succeed():
    spec = BenchmarkSpec(runs=3, density=0.0, seed=5, record_timing=False)
    res = run_benchmark(spec)
    assert res.success_rate == 1.0
    for r in res.rows:
        assert r.length >= 14.9  # start and goal are 15 m apart
        assert r.energy >= 0.0


def test_benchmark_csv_deterministic():
    spec = BenchmarkSpec(runs=3, density=0.25, seed=9, record_timing=False)
    csv1 = run_benchmark(spec).to_csv()
    csv2 = run_benchmark(spec).to_csv()
    assert csv1 == csv2
    header = csv1.splitlines()[0]
    assert header == "seed,success,t_flight,length,energy,opt_ms,func_evals,v_avg,v_max"
    assert csv1.splitlines()[-1].startswith("agg_max,")


def test_benchmark_identical_seeds_across_solvers():
    s1 = BenchmarkSpec(runs=2, density=0.2, seed=21, solver="lbfgs", record_timing=False)
    s2 = BenchmarkSpec(runs=2, density=0.2, seed=21, solver="bb", record_timing=False)
    g1, b1 = gen_random_map(s1, 21)
    g2, b2 = gen_random_map(s2, 21)
    assert np.array_equal(g1.occupancy, g2.occupancy)


def test_benchmark_audit_hooks():
    spec = BenchmarkSpec(runs=2, density=0.15, seed=33, keep_trajectories=True,
                         record_timing=False)
    res = run_benchmark(spec)
    assert len(res.trajectories) == 2
    assert len(res.grids) == 2
    for trajs, grid in zip(res.trajectories, res.grids):
        for traj in trajs:
            assert traj.n_ctrl >= 4
