"""Numeric back ends for co-dependent parameters.

``newton_system`` solves the square fixed-point system ``x_i = f_i(x)`` with
a damped Newton iteration; ``powell_minimize`` minimises a black-box
objective over a box with Powell's conjugate-direction method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PoleError, SolverError

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200
NEWTON_RESTARTS = 8
MAX_HALVINGS = 40

POWELL_FTOL = 1e-12
POWELL_XTOL = 1e-8
POWELL_MAX_EVALS = 10_000
POWELL_START_TRIES = 50
GOLDEN = (math.sqrt(5) - 1) / 2


def default_domain(name):
    """Probability-like names get [0,1]; anything that looks like a rate or reward gets [0,1e6]."""
    low = name.lower()
    if low.startswith("p") or "prob" in low:
        return (0.0, 1.0)
    return (0.0, 1e6)


class RationalEquation:
    """Adapter giving a RationalFunction the ``value_grad`` interface."""

    def __init__(self, rf, params):
        self.rf = rf
        self.params = list(params)
        self.partials = [rf.derivative(p) for p in self.params]

    def value_grad(self, x):
        v = self.rf.evalf(x)
        return v, np.array([0.0 if d.is_zero() else d.evalf(x) for d in self.partials])


@dataclass
class EquationSystem:
    """Residuals ``g_i(x) = x_i - f_i(x)`` over ordered parameters.

    Each ``functions[i]`` maps a name->float binding to ``(value, gradient)``
    with the gradient ordered like ``params``.  Plain RationalFunctions are
    wrapped automatically.
    """
    params: list
    functions: list
    domains: list = None
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        from .parametric.poly import RationalFunction
        if len(self.params) != len(self.functions):
            raise SolverError("equation system must be square")
        self.functions = [RationalEquation(f, self.params) if isinstance(f, RationalFunction) else f
                          for f in self.functions]
        if self.domains is None:
            self.domains = [default_domain(p) for p in self.params]
        for p, (lo, hi) in zip(self.params, self.domains):
            if not lo <= hi:
                raise SolverError(f"empty domain [{lo}, {hi}] for {p}")

    def binding(self, x):
        b = dict(self.fixed)
        b.update(zip(self.params, (float(v) for v in x)))
        return b

    def residual(self, x):
        g, _ = self.residual_jacobian(x, need_jacobian=False)
        return g

    def residual_jacobian(self, x, need_jacobian=True):
        b = self.binding(x)
        n = len(self.params)
        g = np.empty(n)
        J = np.eye(n)
        for i, f in enumerate(self.functions):
            v, grad = f.value_grad(b)
            g[i] = x[i] - v
            if need_jacobian:
                J[i] -= np.asarray(grad, dtype=float)
        return g, J

    def clamp(self, x):
        lo = np.array([d[0] for d in self.domains], dtype=float)
        hi = np.array([d[1] for d in self.domains], dtype=float)
        return np.clip(x, lo, hi)

    def midpoint(self):
        return np.array([(lo + hi) / 2 for lo, hi in self.domains], dtype=float)


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int
    restarts: int = 0

    def as_dict(self, params):
        return dict(zip(params, (float(v) for v in self.x)))


def _safe_residual(sys, x):
    try:
        g = sys.residual(x)
    except (PoleError, ZeroDivisionError, OverflowError):
        return None
    if not np.all(np.isfinite(g)):
        return None
    return g


def newton_system(sys: EquationSystem, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER) -> NewtonResult:
    """Damped Newton iteration from *x0*; iterates are clamped into the domains."""
    x = sys.clamp(np.asarray(x0, dtype=float))
    for it in range(max_iter + 1):
        try:
            g, J = sys.residual_jacobian(x)
        except PoleError as exc:
            raise SolverError(f"pole hit at {sys.binding(x)}: {exc}", best=x) from None
        norm = float(np.max(np.abs(g))) if len(g) else 0.0
        if norm < tol:
            return NewtonResult(x, norm, it)
        if it == max_iter:
            break
        try:
            if np.linalg.cond(J) > 1e14:
                raise np.linalg.LinAlgError
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            raise SolverError(f"singular Jacobian at {sys.binding(x)}", best=x,
                              residual=norm, iterations=it) from None
        base = float(np.linalg.norm(g))
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = sys.clamp(x + t * step)
            gc = _safe_residual(sys, cand)
            if gc is not None and float(np.linalg.norm(gc)) < base:
                x = cand
                break
            t /= 2
        else:
            raise SolverError("line search failed to reduce the residual", best=x,
                              residual=norm, iterations=it)
    raise SolverError(f"Newton did not converge in {max_iter} iterations", best=x,
                      residual=norm, iterations=max_iter)


def newton_solve(sys: EquationSystem, x0=None, restarts=NEWTON_RESTARTS, seed=0,
                 tol=NEWTON_TOL) -> NewtonResult:
    """Newton from *x0* (default: domain midpoints), then from seeded random restarts."""
    rng = np.random.default_rng(seed)
    start = sys.midpoint() if x0 is None else np.asarray(x0, dtype=float)
    best = None
    last = None
    for attempt in range(restarts + 1):
        try:
            res = newton_system(sys, start, tol=tol)
            res.restarts = attempt
            return res
        except SolverError as exc:
            last = exc
            if exc.residual is not None and (best is None or exc.residual < best.residual):
                best = exc
        lo = np.array([d[0] for d in sys.domains])
        hi = np.array([d[1] for d in sys.domains])
        start = rng.uniform(lo, hi)
    worst = best or last
    raise SolverError(f"Newton failed from the midpoint and {restarts} restarts: {last}",
                      best=worst.best, residual=worst.residual, iterations=worst.iterations)


# ------------------------------------------------------------------ Powell

@dataclass
class Objective:
    """Black-box objective over named, box-bounded parameters."""
    params: list
    function: object  # callable: np.ndarray -> float
    domains: list = None

    def __post_init__(self):
        if self.domains is None:
            self.domains = [default_domain(p) for p in self.params]

    @classmethod
    def residuals(cls, params, evaluate, domains=None):
        """Sum of squared residuals ``sum_i (x_i - evaluate(x)_i)^2``."""
        def f(x):
            vals = np.asarray(evaluate(dict(zip(params, (float(v) for v in x)))), dtype=float)
            return float(np.sum((np.asarray(x) - vals) ** 2))
        return cls(list(params), f, domains)


@dataclass
class PowellResult:
    x: np.ndarray
    fun: float
    evaluations: int
    iterations: int
    converged: bool


class _Budget(Exception):
    pass


class _Counter:
    def __init__(self, f, limit):
        self.f, self.limit = f, limit
        self.count = 0
        self.best_x, self.best_f = None, math.inf

    def __call__(self, x):
        if self.count >= self.limit:
            raise _Budget
        self.count += 1
        try:
            v = float(self.f(x))
        except (PoleError, ZeroDivisionError, OverflowError):
            v = math.inf
        if not math.isfinite(v):
            v = math.inf
        if v < self.best_f:
            self.best_f, self.best_x = v, np.array(x, dtype=float)
        return v


def _t_range(x, d, lo, hi):
    tmin, tmax = -math.inf, math.inf
    for xi, di, l, h in zip(x, d, lo, hi):
        if di > 0:
            tmin, tmax = max(tmin, (l - xi) / di), min(tmax, (h - xi) / di)
        elif di < 0:
            tmin, tmax = max(tmin, (h - xi) / di), min(tmax, (l - xi) / di)
    return min(tmin, 0.0), max(tmax, 0.0)


def _line_search(F, x, fx, d, lo, hi, h0, xtol):
    """Bracket along x + t d (clipped to the box), then golden-section inside the bracket."""
    tmin, tmax = _t_range(x, d, lo, hi)
    if tmax - tmin <= 0:
        return x, fx, 0.0
    dnorm = float(np.max(np.abs(d)))
    ttol = xtol / dnorm if dnorm > 0 else xtol

    def at(t):
        return np.clip(x + t * d, lo, hi)

    cache = {0.0: fx}

    def f(t):
        if t not in cache:
            cache[t] = F(at(t))
        return cache[t]

    h = min(h0, max(tmax, -tmin))
    bracket = None
    for _ in range(8):
        for sign in (1.0, -1.0):
            t1 = min(max(sign * h, tmin), tmax)
            if t1 == 0.0 or f(t1) >= fx:
                continue
            a, b = 0.0, t1
            while True:
                c = b + (b - a) * 1.618
                c = min(max(c, tmin), tmax)
                if c == b or f(c) >= f(b):
                    bracket = (a, b, c)
                    break
                a, b = b, c
            break
        if bracket is not None:
            break
        h /= 10
        if h < ttol:
            break
    if bracket is None:
        return x, fx, 0.0
    a, b, c = bracket
    lo_t, hi_t = min(a, c), max(a, c)
    # golden-section search on [lo_t, hi_t]
    x1 = hi_t - GOLDEN * (hi_t - lo_t)
    x2 = lo_t + GOLDEN * (hi_t - lo_t)
    f1, f2 = f(x1), f(x2)
    for _ in range(200):
        if hi_t - lo_t <= ttol:
            break
        if f1 < f2:
            hi_t, x2, f2 = x2, x1, f1
            x1 = hi_t - GOLDEN * (hi_t - lo_t)
            f1 = f(x1)
        else:
            lo_t, x1, f1 = x1, x2, f2
            x2 = lo_t + GOLDEN * (hi_t - lo_t)
            f2 = f(x2)
    t_best = min(cache, key=lambda t: (cache[t], abs(t)))
    return at(t_best), cache[t_best], t_best


def powell_minimize(obj: Objective, x0=None, ftol=POWELL_FTOL, xtol=POWELL_XTOL,
                    max_evals=POWELL_MAX_EVALS, target=None, seed=0,
                    start_tries=POWELL_START_TRIES) -> PowellResult:
    """Powell's conjugate-direction minimisation over the objective's box.

    Stops when one full sweep lowers the objective by at most *ftol* or moves
    every coordinate by at most *xtol*, or when the objective drops below
    *target*.  Directions are reset to the coordinate axes every n sweeps.
    The best point seen is returned; ``converged`` is False when the
    evaluation budget ran out first.  If the objective is infinite at *x0*
    (an infeasible binding), up to *start_tries* seeded uniform points in the
    box are tried as starting points instead.
    """
    lo = np.array([d[0] for d in obj.domains], dtype=float)
    hi = np.array([d[1] for d in obj.domains], dtype=float)
    n = len(lo)
    x = np.clip(np.asarray((lo + hi) / 2 if x0 is None else x0, dtype=float), lo, hi)
    F = _Counter(obj.function, max_evals)
    width = np.where(np.isfinite(hi - lo) & (hi > lo), hi - lo, 1.0)

    def axes():
        return [np.eye(n)[i] * width[i] for i in range(n)]

    it = 0
    try:
        fx = F(x)
        rng = np.random.default_rng(seed)
        for _ in range(start_tries if n else 0):
            if math.isfinite(fx):
                break
            x = rng.uniform(lo, hi)
            fx = F(x)
        dirs = axes()
        while True:
            it += 1
            if it > 1 and (it - 1) % n == 0:
                dirs = axes()
            x_start, f_start = x.copy(), fx
            drop, drop_i = 0.0, 0
            for i, d in enumerate(dirs):
                f_before = fx
                x, fx, _ = _line_search(F, x, fx, d, lo, hi, 0.1, xtol)
                if f_before - fx > drop:
                    drop, drop_i = f_before - fx, i
            if target is not None and fx <= target:
                break
            moved = float(np.max(np.abs(x - x_start))) if n else 0.0
            if f_start - fx <= ftol or moved <= xtol:
                break
            new_d = x - x_start
            # Powell's test for replacing the direction of largest decrease
            fe = F(np.clip(2 * x - x_start, lo, hi))
            if fe < f_start and 2 * (f_start - 2 * fx + fe) * (f_start - fx - drop) ** 2 < drop * (f_start - fe) ** 2:
                x, fx, _ = _line_search(F, x, fx, new_d, lo, hi, 1.0, xtol)
                dirs[drop_i] = dirs[-1]
                dirs[-1] = new_d
        converged = True
    except _Budget:
        converged = F.best_f <= (target if target is not None else -math.inf)
    if F.best_x is not None and F.best_f <= fx:
        x, fx = F.best_x, F.best_f
    return PowellResult(x, fx, F.count, it, converged)
