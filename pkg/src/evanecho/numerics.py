"""Numerical kernel: bracketed root finding, fixed-step ODE integration,
and damped nonlinear least squares.

Everything in this module is a pure function of its arguments and fully
deterministic, so results are reproducible and safe to use from parallel
workers. The three routines are deliberately plain: a Brent-style hybrid
for transcendental roots, classical RK4 as a verification oracle, and a
Levenberg-damped Gauss-Newton loop for the decay fits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateJacobian, MaxIterations, NonFiniteState, NoSignChange

__all__ = [
    "Bracket",
    "FitResult",
    "find_root_bracketed",
    "integrate_ode_fixed_step",
    "fit_nonlinear_least_squares",
]

ROOT_MAX_ITERATIONS = 200
FIT_MAX_ITERATIONS = 500
ROOT_TOL_DEFAULT = 1e-12
FIT_RTOL_DEFAULT = 1e-10
FIT_DAMPING_INIT = 1e-3


@dataclass(frozen=True)
class Bracket:
    """Interval [lo, hi] whose endpoints straddle a sign change."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class FitResult:
    """Outcome of a nonlinear least-squares fit.

    residual_norm is the 2-norm of the final residual vector (same units
    as the data). converged is True only when the projected gradient at
    the solution dropped below the internal tolerance; a fit stopped by
    the iteration cap carries converged=False but is not an error.
    """

    params: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int


def find_root_bracketed(
    f: Callable[[float], float],
    bracket: Bracket,
    tol: float = ROOT_TOL_DEFAULT,
    max_iterations: int = ROOT_MAX_ITERATIONS,
) -> float:
    """Find a root of f inside bracket by Brent's method.

    Combines bisection, secant, and inverse quadratic interpolation; never
    evaluates f outside [lo, hi]. Returns x with bracket width <= tol.

    Raises NoSignChange if f(lo) and f(hi) have the same sign, and
    MaxIterations if the tolerance is not met within max_iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b = bracket.lo, bracket.hi
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0) == (fb > 0):
        raise NoSignChange(f"f({a}) = {fa} and f({b}) = {fb} have the same sign")

    if abs(fa) < abs(fb):
        a, b, fa, fb = b, a, fb, fa
    c, fc = a, fa
    d = e = b - a

    for _ in range(max_iterations):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb

        m = 0.5 * (c - b)
        if abs(m) <= 0.5 * tol or fb == 0.0:
            return b

        if abs(e) < 0.5 * tol or abs(fa) <= abs(fb):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                # secant
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                # inverse quadratic
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(0.5 * tol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m

        a, fa = b, fb
        if abs(d) > 0.5 * tol:
            b += d
        else:
            b += 0.5 * tol if m > 0 else -0.5 * tol
        fb = f(b)

    raise MaxIterations(f"root not bracketed to {tol} within {max_iterations} iterations")


def integrate_ode_fixed_step(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: Sequence[float] | np.ndarray,
    t_span: tuple[float, float],
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate y' = rhs(t, y) with classical fixed-step RK4.

    dt must tile t_span to within rounding. Returns (times, states) where
    states[k] is the state at times[k], including both endpoints. Used as
    the slow-but-trusted oracle for the closed-form pulse propagator.

    Raises NonFiniteState as soon as any component becomes NaN/inf.
    """
    t0, t1 = t_span
    if dt <= 0:
        raise ValueError("dt must be positive")
    span = t1 - t0
    if span < 0:
        raise ValueError("t_span must be increasing")
    n = int(round(span / dt))
    if n == 0 or abs(n * dt - span) > 1e-9 * max(abs(span), dt):
        raise ValueError(f"dt = {dt} does not divide span {span} evenly")

    y = np.asarray(y0, dtype=float).copy()
    times = t0 + dt * np.arange(n + 1)
    states = np.empty((n + 1,) + y.shape, dtype=float)
    states[0] = y
    for k in range(n):
        t = times[k]
        k1 = np.asarray(rhs(t, y))
        k2 = np.asarray(rhs(t + 0.5 * dt, y + 0.5 * dt * k1))
        k3 = np.asarray(rhs(t + 0.5 * dt, y + 0.5 * dt * k2))
        k4 = np.asarray(rhs(t + dt, y + dt * k3))
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"state became non-finite at t = {times[k + 1]}")
        states[k + 1] = y
    return times, states


def _clamp(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(p, lo), hi)


def _jacobian(model, p, x, y_shape, lo, hi):
    """Central-difference Jacobian, with steps kept inside the bounds."""
    n = p.size
    jac = np.empty((y_shape, n))
    for j in range(n):
        h = 1e-7 * max(abs(p[j]), 1.0)
        p_hi = p.copy()
        p_lo = p.copy()
        p_hi[j] = min(p[j] + h, hi[j])
        p_lo[j] = max(p[j] - h, lo[j])
        dp = p_hi[j] - p_lo[j]
        if dp == 0.0:
            jac[:, j] = 0.0
            continue
        jac[:, j] = (np.asarray(model(p_hi, x)) - np.asarray(model(p_lo, x))) / dp
    return jac


def fit_nonlinear_least_squares(
    model: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    init: Sequence[float],
    bounds: Sequence[tuple[float, float]] | None = None,
    rtol: float = FIT_RTOL_DEFAULT,
    max_iterations: int = FIT_MAX_ITERATIONS,
) -> FitResult:
    """Least-squares fit of model(params, x) to y by damped Gauss-Newton.

    The damping factor starts at 1e-3, multiplies by 10 whenever a step
    increases the residual and divides by 10 on acceptance, which makes
    the trajectory fully deterministic. Iterates are clamped to bounds
    (a sequence of (lo, hi) pairs, None for unbounded). Convergence is
    declared on a relative residual-norm change below rtol, with the
    converged flag additionally requiring a small projected gradient.

    Raises DegenerateJacobian when the damped normal equations stay
    singular no matter how large the damping grows.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(init, dtype=float).copy()
    n_par = p.size
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have the same length")
    if y.shape[0] < n_par:
        raise ValueError("need at least as many points as parameters")

    if bounds is None:
        lo = np.full(n_par, -np.inf)
        hi = np.full(n_par, np.inf)
    else:
        lo = np.array([-np.inf if b is None or b[0] is None else float(b[0]) for b in bounds])
        hi = np.array([np.inf if b is None or b[1] is None else float(b[1]) for b in bounds])
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError("init must lie within bounds")

    def cost_of(params):
        r = y - np.asarray(model(params, x))
        return r, float(r @ r)

    r, cost = cost_of(p)
    lam = FIT_DAMPING_INIT
    iterations = 0
    converged_resid = False

    for iterations in range(1, max_iterations + 1):
        jac = _jacobian(model, p, x, y.shape[0], lo, hi)
        g = jac.T @ r
        a_mat = jac.T @ jac
        diag = np.diag(a_mat).copy()
        diag[diag == 0.0] = 1.0

        accepted = False
        while True:
            try:
                step = np.linalg.solve(a_mat + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)):
                lam *= 10.0
                if lam > 1e15:
                    raise DegenerateJacobian(
                        "normal equations singular beyond damping recovery"
                    )
                continue
            p_try = _clamp(p + step, lo, hi)
            r_try, cost_try = cost_of(p_try)
            if cost_try <= cost and np.all(np.isfinite(r_try)):
                accepted = True
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
            if lam > 1e15:
                break

        if not accepted:
            break
        prev_cost = cost
        p, r, cost = p_try, r_try, cost_try
        if prev_cost == 0.0 or abs(prev_cost - cost) <= rtol * max(prev_cost, 1e-300):
            converged_resid = True
            break

    # projected gradient: ignore components that push against an active bound
    jac = _jacobian(model, p, x, y.shape[0], lo, hi)
    g = jac.T @ r
    at_lo = (p <= lo) & (g < 0)
    at_hi = (p >= hi) & (g > 0)
    g_proj = np.where(at_lo | at_hi, 0.0, g)
    # scale-invariant first-order test: cosine of the angle between the
    # residual and each jacobian column, so parameter units drop out; an
    # essentially perfect fit passes outright because the direction of a
    # float-noise residual is meaningless
    colnorm = np.sqrt((jac * jac).sum(axis=0))
    denom = np.maximum(colnorm * float(np.sqrt(cost)), 1e-300)
    cosine_small = float(np.max(np.abs(g_proj) / denom, initial=0.0)) <= 1e-6
    resid_negligible = float(np.sqrt(cost)) <= 1e-10 * max(float(np.linalg.norm(y)), 1e-300)
    grad_small = cosine_small or resid_negligible

    return FitResult(
        params=p,
        residual_norm=float(np.sqrt(cost)),
        converged=bool(converged_resid and grad_small),
        iterations=iterations,
    )
