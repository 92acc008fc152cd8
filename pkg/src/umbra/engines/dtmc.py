"""Discrete-time Markov chain kernels.

Every function takes a row-stochastic csr matrix ``P`` (n x n) and numpy
vectors, and returns the per-state result vector.  ``check_query`` maps a
parsed query onto these kernels for a compiled model.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import EngineError
from ..props import Cumulative, Instant, LongRun, Next, Reach, Until
from .linalg import backward_reach, solve_linear, structure
from .states import sat


def prob0_prob1(P, phi1, phi2, adj=None):
    """States with probability 0 and 1 of satisfying ``phi1 U phi2``."""
    if adj is None:
        adj = structure(P)
    some = backward_reach(adj, phi2, phi1)
    no = ~some
    can_fail = backward_reach(adj, no, phi1 & ~phi2)
    yes = ~can_fail
    return no, yes


def _restricted_solve(P, maybe, rhs):
    idx = np.flatnonzero(maybe)
    sub = P[idx][:, idx]
    A = sp.identity(len(idx), format="csr") - sub
    x, info = solve_linear(A, rhs, where=_preview(idx))
    return idx, x, info


def _preview(idx, k=8):
    shown = ", ".join(str(i) for i in idx[:k])
    return shown + (", ..." if len(idx) > k else "")


def until(P, phi1, phi2):
    no, yes = prob0_prob1(P, phi1, phi2)
    maybe = ~(no | yes)
    x = yes.astype(float)
    info = {"method": "precomputation"}
    if maybe.any():
        idx = np.flatnonzero(maybe)
        rhs = np.asarray(P[idx] @ yes.astype(float)).ravel()
        idx, sol, info = _restricted_solve(P, maybe, rhs)
        x[idx] = sol
    return np.clip(x, 0.0, 1.0), info


def bounded_until(P, phi1, phi2, k):
    x = phi2.astype(float)
    cont = phi1 & ~phi2
    for _ in range(int(k)):
        x = np.where(phi2, 1.0, np.where(cont, P @ x, 0.0))
    return x


def next_prob(P, phi):
    return np.asarray(P @ phi.astype(float)).ravel()


def cumulative_reward(P, r, k):
    x = np.zeros(P.shape[0])
    for _ in range(int(k)):
        x = r + P @ x
    return x


def instant_reward(P, rho, k):
    x = np.asarray(rho, dtype=float)
    for _ in range(int(k)):
        x = P @ x
    return x


def reach_reward(P, r, target):
    """Expected reward accumulated until *target*; inf where it is not reached a.s."""
    n = P.shape[0]
    _, yes = prob0_prob1(P, np.ones(n, dtype=bool), target)
    x = np.full(n, np.inf)
    x[target] = 0.0
    maybe = yes & ~target
    info = {"method": "precomputation"}
    if maybe.any():
        idx = np.flatnonzero(maybe)
        idx, sol, info = _restricted_solve(P, maybe, r[idx])
        x[idx] = sol
    return x, info


def check_query(m, q, P=None, rows=None):
    """Per-state vector for query *q* on dtmc *m*.

    *P* and *rows* override the transition matrix and the choice row used in
    each state; they let a policy-induced chain of an mdp reuse these kernels.
    """
    from .steady import long_run_probability, long_run_reward

    if P is None:
        P = m.matrix()
    body = q.body
    info = {}

    def step_rewards():
        r = m.choice_rewards(q.reward)
        return r if rows is None else r[rows]

    if q.op == "P":
        if isinstance(body, Next):
            return next_prob(P, sat(m, body.phi)), info
        phi1, phi2 = sat(m, body.left), sat(m, body.right)
        if body.bound is None:
            return until(P, phi1, phi2)
        return bounded_until(P, phi1, phi2, body.bound.hi), {"iterations": int(body.bound.hi)}
    if q.op == "S":
        return long_run_probability(m, sat(m, body), P=P), info
    if isinstance(body, Cumulative):
        return cumulative_reward(P, step_rewards(), body.bound), info
    if isinstance(body, Instant):
        return instant_reward(P, m.state_rewards(q.reward), body.time), info
    if isinstance(body, Reach):
        return reach_reward(P, step_rewards(), sat(m, body.target))
    if isinstance(body, LongRun):
        return long_run_reward(m, step_rewards(), P=P), info
    raise EngineError(f"unsupported query {q.to_text()}")
