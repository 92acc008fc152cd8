"""Markov decision process kernels: value iteration with graph precomputation.

An mdp is handled as a choice matrix ``M`` with one row per (state, choice)
and an ``offsets`` array delimiting each state's rows.  After value iteration
an optimal deterministic memoryless policy is extracted and evaluated exactly
on its induced chain, then improved until no strict improvement remains.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import EngineError
from ..props import Cumulative, Instant, Next, Reach
from . import dtmc
from .linalg import solve_linear
from .states import sat

VI_TOL = 1e-8
VI_MAX_ITER = 10 ** 6
TIE_TOL = 1e-9


class Choices:
    """Row-grouped view of an mdp's choices."""

    def __init__(self, M, offsets):
        self.M = sp.csr_matrix(M)
        self.offsets = np.asarray(offsets)
        self.n = len(self.offsets) - 1
        counts = np.diff(self.offsets)
        self.row_state = np.repeat(np.arange(self.n), counts)
        S = self.M.copy()
        S.data = np.ones_like(S.data)
        self.structure = S

    def per_state(self, row_vals, how):
        starts = self.offsets[:-1]
        if how == "max":
            return np.maximum.reduceat(row_vals, starts)
        return np.minimum.reduceat(row_vals, starts)

    def exists(self, row_mask):
        return np.add.reduceat(row_mask.astype(np.int64), self.offsets[:-1]) > 0

    def forall(self, row_mask):
        return np.add.reduceat((~row_mask).astype(np.int64), self.offsets[:-1]) == 0

    def rows_hitting(self, mask):
        return (self.structure @ mask.astype(float)) > 0

    def rows_inside(self, mask):
        return (self.structure @ (~mask).astype(float)) == 0

    def best_rows(self, row_vals, best, allowed=None, tol=TIE_TOL):
        """First (lowest-index) row of each state whose value attains *best*."""
        ok = np.abs(row_vals - best[self.row_state]) <= tol * np.maximum(1.0, np.abs(best[self.row_state]))
        ok |= np.isinf(row_vals) & (row_vals == best[self.row_state])
        if allowed is not None:
            ok &= allowed
        return self.first_rows(ok)

    def first_rows(self, row_mask):
        """Lowest row per state within *row_mask*; -1 where none."""
        out = np.full(self.n, -1, dtype=np.int64)
        rows = np.flatnonzero(row_mask)
        states, first = np.unique(self.row_state[rows], return_index=True)
        out[states] = rows[first]
        return out

    def induced(self, rows):
        return sp.csr_matrix(self.M[rows])


# ------------------------------------------------------------- precomputation

def prob0a(C, phi1, phi2):
    """States where every policy reaches phi2 with probability 0 (max = 0)."""
    reach = phi2.copy()
    while True:
        new = C.exists(C.rows_hitting(reach)) & phi1 & ~reach
        if not new.any():
            return ~reach
        reach |= new


def prob0e(C, phi1, phi2):
    """States where some policy reaches phi2 with probability 0 (min = 0)."""
    reach = phi2.copy()
    while True:
        new = C.forall(C.rows_hitting(reach)) & phi1 & ~reach
        if not new.any():
            return ~reach
        reach |= new


def prob1a(C, phi1, phi2, no_e):
    """States where every policy reaches phi2 almost surely (min = 1)."""
    bad = no_e.copy()
    mid = phi1 & ~phi2
    while True:
        new = C.exists(C.rows_hitting(bad)) & mid & ~bad
        if not new.any():
            return ~bad
        bad |= new


def prob1e(C, phi1, phi2):
    """States where some policy reaches phi2 almost surely (max = 1)."""
    u = np.ones(C.n, dtype=bool)
    while True:
        r = phi2.copy()
        while True:
            rows = C.rows_inside(u) & C.rows_hitting(r)
            new = C.exists(rows) & phi1 & ~r
            if not new.any():
                break
            r |= new
        if np.array_equal(r, u):
            return u
        u = r


# ------------------------------------------------------------ value iteration

def _iterate(C, x, update, tol=VI_TOL):
    for it in range(1, VI_MAX_ITER + 1):
        new = update(x)
        diff = np.abs(new - x)
        finite = np.isfinite(diff)
        delta = float(diff[finite].max()) if finite.any() else 0.0
        x = new
        if delta < tol:
            return x, it
    raise EngineError(f"value iteration did not converge in {VI_MAX_ITER} iterations")


def _evaluate(C, rows, yes, maybe):
    P = C.induced(rows)
    x = yes.astype(float)
    if maybe.any():
        idx = np.flatnonzero(maybe)
        rhs = np.asarray(P[idx] @ yes.astype(float)).ravel()
        sub = P[idx][:, idx]
        sol, _ = solve_linear(sp.identity(len(idx), format="csr") - sub, rhs)
        x[idx] = sol
    return x


def _attractor_rows(C, row_vals, best, target, region, allowed=None):
    """Choose optimal rows that make progress towards *target* (breadth-first)."""
    opt = np.abs(row_vals - best[C.row_state]) <= 1e-6 * np.maximum(1.0, best[C.row_state])
    if allowed is not None:
        opt &= allowed
    rows = np.full(C.n, -1, dtype=np.int64)
    done = target.copy()
    pending = region & ~target
    while pending.any():
        cand = opt & C.rows_hitting(done) & pending[C.row_state]
        pick = C.first_rows(cand)
        newly = pick >= 0
        if not newly.any():
            break
        rows[newly] = pick[newly]
        done |= newly
        pending &= ~newly
    return rows


def until(C, phi1, phi2, how):
    if how == "max":
        no = prob0a(C, phi1, phi2)
        yes = prob1e(C, phi1, phi2)
    else:
        no = prob0e(C, phi1, phi2)
        yes = prob1a(C, phi1, phi2, no)
    maybe = ~(no | yes)
    x = yes.astype(float)
    iters = 0
    if maybe.any():
        def update(v):
            best = C.per_state(C.M @ v, how)
            return np.where(maybe, best, v)
        x, iters = _iterate(C, x, update)
    row_vals = C.M @ x
    best = C.per_state(row_vals, how)
    rows = C.best_rows(row_vals, best)
    if how == "max":
        # among optimal rows, pick ones that make progress towards phi2
        att = _attractor_rows(C, row_vals, best, phi2, ~no & ~phi2)
        rows = np.where(att >= 0, att, rows)
    else:
        keep_zero = C.first_rows(C.rows_inside(no))
        rows = np.where(no & (keep_zero >= 0), keep_zero, rows)

    def evaluate(r):
        return _evaluate(C, r, yes, maybe)

    x, rows, rounds = _improve(C, evaluate(rows), rows, maybe, how,
                               lambda v: C.M @ v, evaluate)
    return np.clip(x, 0.0, 1.0), rows, {"iterations": iters, "improvement_rounds": rounds}


def _improve(C, x, rows, maybe, how, row_values, evaluate, max_rounds=100):
    """Policy improvement on the maybe states, switching only on strict gains.

    A candidate policy whose evaluation becomes infinite on a maybe state is
    rejected and the current one kept.
    """
    for rnd in range(max_rounds):
        vals = row_values(x)
        best = C.per_state(vals, how)
        cur = vals[rows]
        with np.errstate(invalid="ignore"):
            gain = (best - cur) if how == "max" else (cur - best)
            switch = maybe & (gain > 1e-12 * np.maximum(1.0, np.abs(best)))
        if not switch.any():
            return x, rows, rnd
        cand = C.best_rows(vals, best, tol=0.0)
        new_rows = np.where(switch & (cand >= 0), cand, rows)
        new_x = evaluate(new_rows)
        if not np.all(np.isfinite(new_x[maybe])):
            return x, rows, rnd
        x, rows = new_x, new_rows
    return x, rows, max_rounds


def reach_reward(C, r_rows, target, how):
    n = C.n
    all_states = np.ones(n, dtype=bool)
    if how == "max":
        no = prob0e(C, all_states, target)
        finite = prob1a(C, all_states, target, no)
        allowed = np.ones(len(r_rows), dtype=bool)
    else:
        finite = prob1e(C, all_states, target)
        allowed = C.rows_inside(finite)
    maybe = finite & ~target
    fill = -np.inf if how == "max" else np.inf

    def row_values(v):
        vals = r_rows + C.M @ np.where(finite, v, 0.0)
        return np.where(allowed, vals, fill)

    x = np.where(finite, 0.0, np.inf)
    iters = 0
    if maybe.any():
        def update(v):
            return np.where(maybe, C.per_state(row_values(v), how), v)
        x, iters = _iterate(C, x, update)
    vals = row_values(x)
    best = C.per_state(vals, how)
    rows = C.best_rows(vals, best, allowed=allowed)
    if how == "min" and maybe.any():
        # value iteration from below can stall in zero-reward loops; make
        # sure the chosen rows actually lead to the target
        att = _attractor_rows(C, vals, best, target, maybe, allowed=allowed)
        rows = np.where(maybe & (att >= 0), att, rows)
        missing = maybe & (att < 0)
        if missing.any():
            att = _attractor_rows(C, np.zeros_like(vals), np.zeros(n), target, maybe,
                                  allowed=allowed)
            rows = np.where(missing, att, rows)
    fallback = C.first_rows(np.ones(len(r_rows), dtype=bool))
    rows = np.where(rows >= 0, rows, fallback)

    def evaluate(r):
        exact, _ = dtmc.reach_reward(C.induced(r), r_rows[r], target)
        return np.where(finite, exact, np.inf)

    if maybe.any():
        x, rows, rounds = _improve(C, evaluate(rows), rows, maybe, how, row_values, evaluate)
    else:
        rounds = 0
    return x, rows, {"iterations": iters, "improvement_rounds": rounds}


def _bounded(C, step, x, k, how):
    rows = C.first_rows(np.ones(C.M.shape[0], dtype=bool))
    for _ in range(int(k)):
        vals = step(x)
        best = C.per_state(vals, how)
        rows = C.best_rows(vals, best)
        x = best
    return x, rows


def check_query(m, q):
    M, offsets = m.choice_matrix()
    C = Choices(M, offsets)
    how = q.opt or ("min" if q.comparison in (">", ">=") else "max")
    body = q.body
    if q.op == "P":
        if isinstance(body, Next):
            vals = C.M @ sat(m, body.phi).astype(float)
            best = C.per_state(vals, how)
            return best, C.best_rows(vals, best), {}
        phi1, phi2 = sat(m, body.left), sat(m, body.right)
        if body.bound is None:
            return until(C, phi1, phi2, how)
        cont = phi1 & ~phi2
        x = phi2.astype(float)
        rows = C.first_rows(np.ones(M.shape[0], dtype=bool))
        for _ in range(int(body.bound.hi)):
            vals = C.M @ x
            best = C.per_state(vals, how)
            rows = C.best_rows(vals, best)
            x = np.where(phi2, 1.0, np.where(cont, best, 0.0))
        return x, rows, {"iterations": int(body.bound.hi)}
    r_rows = m.choice_rewards(q.reward)
    if isinstance(body, Cumulative):
        x, rows = _bounded(C, lambda v: r_rows + C.M @ v, np.zeros(C.n), body.bound, how)
        return x, rows, {"iterations": int(body.bound)}
    if isinstance(body, Instant):
        x, rows = _bounded(C, lambda v: C.M @ v, m.state_rewards(q.reward), body.time, how)
        return x, rows, {"iterations": int(body.time)}
    if isinstance(body, Reach):
        return reach_reward(C, r_rows, sat(m, body.target), how)
    raise EngineError(f"unsupported query {q.to_text()} on an mdp")
