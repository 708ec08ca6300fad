"""Quasi-Newton minimization: L-BFGS and the Barzilai-Borwein method.

Both solvers consume a callable returning (f, grad) on a flat vector.
L-BFGS keeps the m most recent (s, y) displacement/gradient-change
pairs, applies them through the two-loop recursion seeded with a
BB-scaled identity, and enforces a monotone strong-Wolfe line search.
The standalone BB method takes raw gradient steps scaled by the same
quotients, safeguarded by a nonmonotone backtracking rule; it exists as
the restart-friendly baseline the L-BFGS run is compared against.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import SolverOptions

_CURVATURE_EPS = 1e-12


@dataclass
class SolveReport:
    x_final: np.ndarray
    f_final: float
    iterations: int
    function_evaluations: int
    status: str  # converged | max_iter | line_search_fail | restarted | non_finite
    f_history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status in ("converged", "restarted")


def two_loop_direction(s_list, y_list, rho_list, gamma: float, grad: np.ndarray) -> np.ndarray:
    """H @ grad through the two-loop recursion over stored pairs
    (oldest first), with initial Hessian gamma * I."""
    q = grad.copy()
    alphas = np.empty(len(s_list))
    for i in range(len(s_list) - 1, -1, -1):
        alphas[i] = rho_list[i] * np.dot(s_list[i], q)
        q -= alphas[i] * y_list[i]
    r = gamma * q
    for i in range(len(s_list)):
        beta = rho_list[i] * np.dot(y_list[i], r)
        r += s_list[i] * (alphas[i] - beta)
    return r


def _cubic_minimum(a0, f0, g0, a1, f1, g1):
    """Minimizer of the cubic through two (alpha, f, f') samples.

    Nocedal & Wright eq. 3.59; falls back to bisection when the data is
    degenerate.
    """
    if a0 == a1:
        return a0
    d1 = g0 + g1 - 3.0 * (f0 - f1) / (a0 - a1)
    disc = d1 * d1 - g0 * g1
    if disc < 0.0 or not np.isfinite(disc):
        return 0.5 * (a0 + a1)
    d2 = np.sqrt(disc) * np.sign(a1 - a0)
    denom = g1 - g0 + 2.0 * d2
    if denom == 0.0:
        return 0.5 * (a0 + a1)
    cand = a1 - (a1 - a0) * (g1 + d2 - d1) / denom
    lo, hi = min(a0, a1), max(a0, a1)
    if not np.isfinite(cand) or cand <= lo or cand >= hi:
        return 0.5 * (a0 + a1)
    return cand


def strong_wolfe_search(
    objective,
    x: np.ndarray,
    direction: np.ndarray,
    f0: float,
    g0: np.ndarray,
    opts: SolverOptions,
    alpha_init: float = 1.0,
    max_trials: int = 25,
):
    """Bracketing + zoom line search enforcing the strong Wolfe conditions.

    Returns (alpha, f, grad, evals, ok). ok is False when the trial budget
    ran out; the best Armijo-satisfying point seen is returned then.
    """
    d_g0 = float(np.dot(g0, direction))
    if d_g0 >= 0.0:
        raise ValueError("line search requires a descent direction")
    c1, c2 = opts.wolfe_c1, opts.wolfe_c2

    def phi(alpha):
        f, g = objective(x + alpha * direction)
        return f, g, float(np.dot(g, direction))

    evals = 0
    best = None  # (alpha, f, g) satisfying Armijo
    a_prev, f_prev, df_prev = 0.0, f0, d_g0
    alpha = alpha_init
    alpha_max = 1e4

    for trial in range(max_trials):
        f, g, df = phi(alpha)
        evals += 1
        if not np.isfinite(f):
            alpha = 0.5 * (a_prev + alpha)
            continue
        if f > f0 + c1 * alpha * d_g0 or (trial > 0 and f >= f_prev):
            res = _zoom(phi, f0, d_g0, a_prev, f_prev, df_prev, alpha, f, df, c1, c2, max_trials)
            return (*res[:3], evals + res[3], res[4])
        best = (alpha, f, g)
        if abs(df) <= -c2 * d_g0:
            return alpha, f, g, evals, True
        if df >= 0.0:
            res = _zoom(phi, f0, d_g0, alpha, f, df, a_prev, f_prev, df_prev, c1, c2, max_trials)
            return (*res[:3], evals + res[3], res[4])
        a_prev, f_prev, df_prev = alpha, f, df
        alpha = min(2.0 * alpha, alpha_max)

    if best is not None:
        return best[0], best[1], best[2], evals, False
    f, g, _ = phi(a_prev if a_prev > 0 else alpha)
    return a_prev, f, g, evals + 1, False


def _zoom(phi, f0, d_g0, a_lo, f_lo, df_lo, a_hi, f_hi, df_hi, c1, c2, max_trials):
    evals = 0
    result = None
    for _ in range(max_trials):
        alpha = _cubic_minimum(a_lo, f_lo, df_lo, a_hi, f_hi, df_hi)
        width = abs(a_hi - a_lo)
        if width < 1e-16 * max(1.0, abs(a_lo)):
            break
        # keep strictly interior progress
        margin = 0.05 * width
        alpha = np.clip(alpha, min(a_lo, a_hi) + margin, max(a_lo, a_hi) - margin)
        f, g, df = phi(alpha)
        evals += 1
        if f > f0 + c1 * alpha * d_g0 or f >= f_lo:
            a_hi, f_hi, df_hi = alpha, f, df
        else:
            if abs(df) <= -c2 * d_g0:
                return alpha, f, g, evals, True
            if df * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, df_hi = a_lo, f_lo, df_lo
            a_lo, f_lo, df_lo = alpha, f, df
            result = (alpha, f, g)
    if result is not None:
        return result[0], result[1], result[2], evals, False
    f, g, _ = phi(a_lo)
    return a_lo, f, g, evals + 1, False


def lbfgs_minimize(objective, x0: np.ndarray, opts: SolverOptions | None = None) -> SolveReport:
    """Limited-memory quasi-Newton descent with BB-scaled initial Hessian.

    Terminates on the max-norm gradient tolerance, on relative objective
    stagnation, or at the iteration/evaluation budget. A failed line
    search clears the pair memory once (fast restart) before giving up.
    """
    opts = (opts or SolverOptions()).validate()
    x = np.asarray(x0, dtype=float).copy()
    if x.size == 0:
        f0, _ = objective(x)
        return SolveReport(x, f0, 0, 1, "converged")
    f, g = objective(x)
    evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return SolveReport(x, f, 0, evals, "non_finite")

    s_mem: deque = deque(maxlen=opts.memory)
    y_mem: deque = deque(maxlen=opts.memory)
    rho_mem: deque = deque(maxlen=opts.memory)
    gamma = 1.0
    restarted = False
    history = [f]
    status = "max_iter"
    iteration = 0

    while iteration < opts.max_iterations:
        if np.max(np.abs(g)) <= opts.grad_tolerance:
            status = "converged"
            break
        if evals >= opts.max_function_evals:
            status = "max_iter"
            break
        direction = -two_loop_direction(list(s_mem), list(y_mem), list(rho_mem), gamma, g)
        d_g = float(np.dot(direction, g))
        if d_g >= 0.0:
            # numerically corrupted memory: fall back to steepest descent
            s_mem.clear(); y_mem.clear(); rho_mem.clear()
            gamma = 1.0
            restarted = True
            direction = -g
        alpha0 = 1.0 if s_mem else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        try:
            alpha, f_new, g_new, ls_evals, ok = strong_wolfe_search(
                objective, x, direction, f, g, opts, alpha0
            )
        except ValueError:
            ok = False
            alpha, f_new, g_new, ls_evals = 0.0, f, g, 0
        evals += ls_evals
        if not ok or alpha <= 0.0 or not np.isfinite(f_new):
            if s_mem:
                s_mem.clear(); y_mem.clear(); rho_mem.clear()
                gamma = 1.0
                restarted = True
                continue
            status = "line_search_fail"
            break

        s = alpha * direction
        y = g_new - g
        x = x + s
        iteration += 1
        history.append(f_new)
        sy = float(np.dot(s, y))
        if sy > _CURVATURE_EPS:
            s_mem.append(s)
            y_mem.append(y)
            rho_mem.append(1.0 / sy)
            if opts.bb_variant == "y":
                gamma = sy / float(np.dot(y, y))
            else:
                gamma = float(np.dot(s, s)) / sy
        f_drop = f - f_new
        stalled = f_drop <= opts.rel_f_tolerance * max(abs(f), abs(f_new), 1.0)
        f, g = f_new, g_new
        if stalled:
            status = "converged"
            break

    if status == "max_iter" and np.max(np.abs(g)) <= opts.grad_tolerance:
        status = "converged"
    if status == "converged" and restarted:
        status = "restarted"
    return SolveReport(x, f, iteration, evals, status, history)


def bb_minimize(objective, x0: np.ndarray, opts: SolverOptions | None = None) -> SolveReport:
    """Gradient descent with Barzilai-Borwein step lengths and a
    nonmonotone (watchdog) backtracking safeguard."""
    opts = (opts or SolverOptions()).validate()
    x = np.asarray(x0, dtype=float).copy()
    if x.size == 0:
        f0, _ = objective(x)
        return SolveReport(x, f0, 0, 1, "converged")
    f, g = objective(x)
    evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return SolveReport(x, f, 0, evals, "non_finite")

    history = [f]
    recent = deque([f], maxlen=10)
    step = None
    s_prev = y_prev = None
    status = "max_iter"
    iteration = 0

    while iteration < opts.max_iterations:
        gnorm = np.max(np.abs(g))
        if gnorm <= opts.grad_tolerance:
            status = "converged"
            break
        if evals >= opts.max_function_evals:
            break
        if s_prev is not None:
            sy = float(np.dot(s_prev, y_prev))
            if sy > _CURVATURE_EPS:
                if opts.bb_variant == "y":
                    step = sy / float(np.dot(y_prev, y_prev))
                else:
                    step = float(np.dot(s_prev, s_prev)) / sy
            else:
                step = None
        if step is None or not np.isfinite(step) or step <= 0.0:
            step = min(1.0, 1.0 / max(gnorm, 1e-12))
        step = float(np.clip(step, 1e-12, 1e6))

        # nonmonotone Armijo against the worst recent value
        f_ref = max(recent)
        alpha = step
        accepted = False
        for _ in range(30):
            x_new = x - alpha * g
            f_new, g_new = objective(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f_ref - opts.wolfe_c1 * alpha * float(np.dot(g, g)):
                accepted = True
                break
            alpha *= 0.5
            if evals >= opts.max_function_evals:
                break
        if not accepted:
            status = "line_search_fail"
            break

        s_prev = x_new - x
        y_prev = g_new - g
        f_drop = f - f_new
        x, f, g = x_new, f_new, g_new
        iteration += 1
        history.append(f)
        recent.append(f)
        if 0.0 <= f_drop <= opts.rel_f_tolerance * max(abs(f), 1.0):
            status = "converged"
            break

    if status == "max_iter" and np.max(np.abs(g)) <= opts.grad_tolerance:
        status = "converged"
    return SolveReport(x, f, iteration, evals, status, history)
