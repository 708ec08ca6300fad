"""Command-line entry points: plan, serve, bench."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import BenchmarkSpec, run_benchmark
from .bspline import write_trajectory_csv
from .config import Config, load_config
from .gridmap import load_map_file
from .planner import RobotState, plan
from .service import run_service

log = logging.getLogger(__name__)


def _vec3(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return np.array([float(p) for p in parts])


def _load_cfg(path) -> Config:
    return load_config(path) if path else Config()


def cmd_plan(args) -> int:
    cfg = _load_cfg(args.config)
    grid, boxes = load_map_file(args.map, cfg.planner.inflation_radius)
    debug_sink = open(args.debug_pairs, "w") if args.debug_pairs else None
    try:
        outcome = plan(
            RobotState(args.start), args.goal, grid, cfg,
            solver=args.solver, debug_sink=debug_sink,
        )
    finally:
        if debug_sink is not None:
            debug_sink.close()
    if not outcome.succeeded:
        log.error("planning failed: %s", outcome.message)
        return 1
    write_trajectory_csv(outcome.trajectory, args.out, rate=args.rate)
    s = outcome.stats
    log.info(
        "status=%s  ctrl_pts=%d  duration=%.2fs  rebound_iters=%d  evals=%d  "
        "optimize=%.2fms  total=%.2fms",
        outcome.status, outcome.trajectory.n_ctrl, outcome.trajectory.duration,
        s.rebound_iterations, s.function_evaluations, s.optimize_ms, s.total_ms,
    )
    log.info("trajectory written to %s", args.out)
    if not args.no_figures:
        from .report import save_trajectory_figure

        fig_path = Path(args.out).with_suffix(".png")
        save_trajectory_figure(
            fig_path, boxes, [outcome.trajectory], args.start, args.goal,
            title=f"status={outcome.status}",
        )
        log.info("figure written to %s", fig_path)
    return 0


def cmd_serve(args) -> int:
    cfg = _load_cfg(args.config)
    start = args.start if args.start is not None else None
    run_service(cfg, args.map, args.port, start=start)
    return 0


def cmd_bench(args) -> int:
    spec = BenchmarkSpec(
        runs=args.runs,
        density=args.density,
        seed=args.seed,
        solver=args.solver,
        config=_load_cfg(args.config),
        record_timing=not args.no_timing,
    )
    result = run_benchmark(spec)
    csv_text = result.to_csv()
    Path(args.out).write_text(csv_text)
    ok = [r for r in result.rows if r.success]
    log.info(
        "runs=%d  success=%.2f  mean_evals=%.1f  mean_opt=%.2fms",
        args.runs, result.success_rate,
        float(np.mean([r.function_evaluations for r in ok])) if ok else float("nan"),
        float(np.mean([r.optimize_ms for r in ok])) if ok else float("nan"),
    )
    log.info("report written to %s", args.out)
    if not args.no_figures:
        from .report import save_benchmark_figure

        fig_path = Path(args.out).with_suffix(".png")
        save_benchmark_figure(fig_path, result.rows)
        log.info("figure written to %s", fig_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reboundplan",
        description="ESDF-free gradient-based local trajectory planner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan one trajectory on a map file")
    p_plan.add_argument("--map", required=True)
    p_plan.add_argument("--config", default=None)
    p_plan.add_argument("--start", type=_vec3, required=True)
    p_plan.add_argument("--goal", type=_vec3, required=True)
    p_plan.add_argument("--out", default="traj.csv")
    p_plan.add_argument("--rate", type=float, default=100.0, help="CSV sample rate [Hz]")
    p_plan.add_argument("--solver", choices=["lbfgs", "bb"], default="lbfgs")
    p_plan.add_argument("--debug-pairs", default=None, metavar="FILE",
                        help="dump per-iteration anchor pairs as JSON lines")
    p_plan.add_argument("--no-figures", action="store_true")
    p_plan.set_defaults(fn=cmd_plan)

    p_serve = sub.add_parser("serve", help="run the simulation service")
    p_serve.add_argument("--map", required=True)
    p_serve.add_argument("--config", default=None)
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--start", type=_vec3, default=None)
    p_serve.set_defaults(fn=cmd_serve)

    p_bench = sub.add_parser("bench", help="random-map benchmark sweep")
    p_bench.add_argument("--runs", type=int, default=100)
    p_bench.add_argument("--density", type=float, default=BenchmarkSpec.density)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--solver", choices=["lbfgs", "bb"], default="lbfgs")
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--out", default="report.csv")
    p_bench.add_argument("--no-timing", action="store_true",
                         help="zero the wall-clock column for byte-stable output")
    p_bench.add_argument("--no-figures", action="store_true")
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
