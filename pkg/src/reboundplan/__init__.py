"""ESDF-free gradient-based local trajectory planner on uniform B-splines.

The planner deforms a uniform B-spline out of obstacles using anchor
point / repulsion direction pairs attached to control points, refines
time allocation when dynamic limits are exceeded, and re-fits the
trajectory with an anisotropic displacement penalty.
"""

from .bspline import UniformBSpline
from .config import Config, PenaltyConfig, PlannerConfig, SolverOptions, load_config

__all__ = [
    "UniformBSpline",
    "Config",
    "PenaltyConfig",
    "PlannerConfig",
    "SolverOptions",
    "load_config",
]
