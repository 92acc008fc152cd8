"""Long-run (steady-state) analysis for dtmc and ctmc models.

The chain is split into bottom strongly connected components.  Each BSCC
gets its own stationary distribution, and the transient part is resolved by
the probability of ending up in each BSCC.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..errors import EngineError
from .linalg import solve_linear


def embedded(R):
    """Jump chain of a rate matrix; absorbing states get a self-loop."""
    R = sp.csr_matrix(R)
    exit_rates = np.asarray(R.sum(axis=1)).ravel()
    inv = np.zeros_like(exit_rates)
    live = exit_rates > 0
    inv[live] = 1.0 / exit_rates[live]
    P = sp.diags(inv) @ R
    dead = np.flatnonzero(~live)
    if len(dead):
        P = P + sp.csr_matrix((np.ones(len(dead)), (dead, dead)), shape=R.shape)
    return sp.csr_matrix(P)


def bsccs(P):
    """List of index arrays, one per bottom SCC, in order of their smallest state."""
    n = P.shape[0]
    S = sp.csr_matrix(P)
    count, comp = connected_components(S, directed=True, connection="strong")
    coo = S.tocoo()
    leaving = np.zeros(count, dtype=bool)
    mask = (comp[coo.row] != comp[coo.col]) & (coo.data != 0)
    leaving[comp[coo.row[mask]]] = True
    out = [np.flatnonzero(comp == c) for c in range(count) if not leaving[c]]
    out.sort(key=lambda idx: idx[0])
    if not out and n:
        raise EngineError("chain has no bottom strongly connected component")
    return out


def _generator(m, P):
    if m.kind == "ctmc":
        R = sp.csr_matrix(P)
        return R - sp.diags(np.asarray(R.sum(axis=1)).ravel())
    return sp.csr_matrix(P) - sp.identity(P.shape[0], format="csr")


def _stationary(Q, idx, label):
    k = len(idx)
    if k == 1:
        return np.ones(1)
    A = sp.lil_matrix(Q[idx][:, idx].T)
    A[k - 1, :] = np.ones(k)
    b = np.zeros(k)
    b[k - 1] = 1.0
    try:
        pi, _ = solve_linear(sp.csr_matrix(A), b)
    except EngineError as exc:
        raise EngineError(f"steady-state solve failed in BSCC {label}: {exc}") from None
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _parts(m, P):
    key = ("steady_parts", id(P))
    cached = m._cache.get(key)
    if cached is not None and cached[0] is P:
        return cached[1]
    jump = embedded(P) if m.kind == "ctmc" else sp.csr_matrix(P)
    Q = _generator(m, P)
    comps = bsccs(jump)
    dists = [_stationary(Q, idx, i) for i, idx in enumerate(comps)]
    parts = (jump, comps, dists)
    m._cache[key] = (P, parts)
    return parts


def _absorb(jump, comps, values):
    """Per state, the BSCC-weighted average of per-BSCC *values*."""
    n = jump.shape[0]
    x = np.zeros(n)
    bottom = np.zeros(n, dtype=bool)
    for idx, v in zip(comps, values):
        x[idx] = v
        bottom[idx] = True
    trans = np.flatnonzero(~bottom)
    if len(trans):
        A = sp.identity(len(trans), format="csr") - jump[trans][:, trans]
        rhs = np.asarray(jump[trans] @ np.where(bottom, x, 0.0)).ravel()
        sol, _ = solve_linear(A, rhs)
        x[trans] = sol
    return x


def long_run_probability(m, phi, P=None):
    if P is None:
        P = m.matrix()
    jump, comps, dists = _parts(m, P)
    vals = [float(np.dot(pi, phi[idx])) for idx, pi in zip(comps, dists)]
    return np.clip(_absorb(jump, comps, vals), 0.0, 1.0)


def long_run_reward(m, r, P=None):
    """Long-run average of the per-state reward (rate) vector *r*."""
    if P is None:
        P = m.matrix()
    jump, comps, dists = _parts(m, P)
    vals = [float(np.dot(pi, r[idx])) for idx, pi in zip(comps, dists)]
    return _absorb(jump, comps, vals)


def compute_steady_state(m, start=None):
    """Long-run distribution over states starting from *start* (default: initial)."""
    if m.kind not in ("dtmc", "ctmc"):
        raise EngineError(f"steady state is defined for dtmc/ctmc, not {m.kind}")
    P = m.matrix()
    jump, comps, dists = _parts(m, P)
    n = m.n
    start = m.initial if start is None else start
    pi = np.zeros(n)
    bottom = np.zeros(n, dtype=bool)
    for idx in comps:
        bottom[idx] = True
    if bottom[start]:
        for idx, d in zip(comps, dists):
            if start in idx:
                pi[idx] = d
        return pi
    trans = np.flatnonzero(~bottom)
    pos = {s: i for i, s in enumerate(trans)}
    A = sp.identity(len(trans), format="csr") - jump[trans][:, trans]
    e = np.zeros(len(trans))
    e[pos[start]] = 1.0
    visits, _ = solve_linear(sp.csr_matrix(A.T), e)
    entry = np.asarray(jump[trans].T @ visits).ravel()
    for idx, d in zip(comps, dists):
        pi[idx] = entry[idx].sum() * d
    total = pi.sum()
    return pi / total if total > 0 else pi
