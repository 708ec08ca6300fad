"""Configuration dataclasses and the flat ``key = value`` config file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace


@dataclass
class PenaltyConfig:
    """Weights, limits, and shape parameters of the penalty terms."""

    # the smoothness term sums raw squared derivative control points
    # (hundreds at flight scale) while one collision pair contributes at
    # most ~s_f^3; the weights bring those scales onto equal footing and
    # leave the deformation force winning at the safety clearance
    lambda_smooth: float = 1.0
    lambda_collision: float = 3.0e6
    lambda_feasible: float = 100.0
    lambda_fit: float = 1.0e4
    w_v: float = 1.0
    w_a: float = 1.0
    w_j: float = 1.0
    s_f: float = 0.2           # safety clearance beyond the inflated map [m]
    v_max: float = 2.0         # [m/s]
    a_max: float = 3.0         # [m/s^2]
    j_max: float = 4.0         # [m/s^3]
    lambda_elastic: float = 0.95   # dead-zone fraction of each limit, < 1
    cj_ratio: float = 1.05     # cubic/quadratic split as multiple of the limit
    fit_a: float = 0.4         # displacement ellipse semi-major axis [m]
    fit_b: float = 0.2         # semi-minor axis (radial direction) [m]

    def validate(self) -> "PenaltyConfig":
        for name in ("lambda_smooth", "lambda_collision", "lambda_feasible",
                     "lambda_fit", "w_v", "w_a", "w_j"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("s_f", "v_max", "a_max", "j_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.lambda_elastic < 1.0:
            raise ValueError("lambda_elastic must lie in (0, 1)")
        if self.cj_ratio <= self.lambda_elastic:
            raise ValueError("cj_ratio must exceed lambda_elastic")
        if not self.fit_a >= self.fit_b > 0.0:
            raise ValueError("fit ellipse axes require fit_a >= fit_b > 0")
        return self

    def limit(self, kind: str) -> float:
        return {"v": self.v_max, "a": self.a_max, "j": self.j_max}[kind]


@dataclass
class SolverOptions:
    """Quasi-Newton solver settings shared by the L-BFGS and BB methods."""

    memory: int = 8
    max_iterations: int = 60
    grad_tolerance: float = 1e-4       # on the max-norm of the gradient
    rel_f_tolerance: float = 1e-5
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_function_evals: int = 1500
    bb_variant: str = "y"              # "y": s.y/y.y, "s": s.s/s.y

    def validate(self) -> "SolverOptions":
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("require 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.bb_variant not in ("y", "s"):
            raise ValueError("bb_variant must be 'y' or 's'")
        return self


@dataclass
class PlannerConfig:
    """Rebound planning loop parameters."""

    horizon: float = 7.0               # local goal truncation distance [m]
    ctrl_pt_spacing: float = 0.3       # initial control point spacing [m]
    degree: int = 3
    pipe_radius: float = 0.05          # safety pipe around the final curve [m]
    replan_period: float = 0.5         # service replan timer [s]
    max_rebound_iterations: int = 12
    inflation_radius: float = 0.2      # applied when building grids from files
    init_dt_factor: float = 1.0        # scales the initial knot interval
    one_step_per_round: bool = False   # single solver iteration per discovery round
    max_refine_rounds: int = 3

    def validate(self) -> "PlannerConfig":
        if not self.horizon > self.ctrl_pt_spacing > 0:
            raise ValueError("require horizon > ctrl_pt_spacing > 0")
        if self.pipe_radius < 0:
            raise ValueError("pipe_radius must be non-negative")
        if self.degree < 2:
            raise ValueError("degree must be at least 2")
        return self


@dataclass
class Config:
    """Bundle handed to the planner: penalties, solver, loop parameters."""

    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def validate(self) -> "Config":
        self.penalty.validate()
        self.solver.validate()
        self.planner.validate()
        return self


_SOLVER_KEYS = {
    "lbfgs_memory": "memory",
    "grad_tol": "grad_tolerance",
    "max_iters": "max_iterations",
    "rel_f_tol": "rel_f_tolerance",
    "wolfe_c1": "wolfe_c1",
    "wolfe_c2": "wolfe_c2",
    "max_function_evals": "max_function_evals",
    "bb_variant": "bb_variant",
}


def _coerce(raw: str, target_type):
    if target_type is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return target_type(raw)


def parse_config_text(text: str) -> Config:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = raw

    cfg = Config()
    by_field = {
        **{f.name: (cfg.penalty, f) for f in fields(PenaltyConfig)},
        **{f.name: (cfg.solver, f) for f in fields(SolverOptions)},
        **{f.name: (cfg.planner, f) for f in fields(PlannerConfig)},
    }
    updates: dict[int, dict] = {}
    for key, raw in values.items():
        name = _SOLVER_KEYS.get(key, key)
        if name not in by_field:
            raise ValueError(f"unknown config key {key!r}")
        target, f = by_field[name]
        updates.setdefault(id(target), {"target": target, "kw": {}})["kw"][name] = _coerce(
            raw, f.type if isinstance(f.type, type) else type(getattr(target, name))
        )
    for entry in updates.values():
        t = entry["target"]
        if t is cfg.penalty:
            cfg.penalty = replace(cfg.penalty, **entry["kw"])
        elif t is cfg.solver:
            cfg.solver = replace(cfg.solver, **entry["kw"])
        else:
            cfg.planner = replace(cfg.planner, **entry["kw"])
    return cfg.validate()


def load_config(path) -> Config:
    with open(path) as fh:
        return parse_config_text(fh.read())
