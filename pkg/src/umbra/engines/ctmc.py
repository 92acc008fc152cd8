"""Continuous-time Markov chain kernels based on uniformization."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from ..errors import EngineError
from ..props import Cumulative, Instant, LongRun, Next, Reach, Until
from . import dtmc
from .states import sat
from .steady import embedded, long_run_probability, long_run_reward

UNIFORM_FACTOR = 1.02
TAIL = 1e-12
MAX_TERMS = 10 ** 7


def exit_rates(R):
    return np.asarray(sp.csr_matrix(R).sum(axis=1)).ravel()


def uniformize(R):
    """Return (P, q): uniformized DTMC and uniformization rate."""
    R = sp.csr_matrix(R)
    E = exit_rates(R)
    q = UNIFORM_FACTOR * float(E.max()) if E.size and E.max() > 0 else 1.0
    P = sp.identity(R.shape[0], format="csr") + (R - sp.diags(E)) / q
    return sp.csr_matrix(P), q


def _truncation(qt):
    if qt == 0:
        return 0
    k = int(poisson.isf(TAIL, qt)) + 1
    if k > MAX_TERMS:
        raise EngineError(
            f"uniformization needs {k} Poisson terms (cap {MAX_TERMS}); "
            f"reduce the time bound or the rates")
    return k


def make_absorbing(R, mask):
    """Drop all outgoing rates of the states in *mask*."""
    keep = sp.diags((~mask).astype(float))
    return sp.csr_matrix(keep @ sp.csr_matrix(R))


def transient(R, b, t):
    """``sum_k Poisson(k; qt) P^k b``: expected value of b after time t."""
    b = np.asarray(b, dtype=float)
    if t == 0:
        return b.copy(), {"terms": 0}
    P, q = uniformize(R)
    qt = q * float(t)
    K = _truncation(qt)
    weights = poisson.pmf(np.arange(K + 1), qt)
    x = weights[0] * b
    v = b
    for k in range(1, K + 1):
        v = P @ v
        x += weights[k] * v
    return x, {"terms": K, "uniformization_rate": q}


def accumulated(R, r, t):
    """Expected reward (rate vector *r*) accumulated over [0, t]."""
    r = np.asarray(r, dtype=float)
    if t == 0:
        return np.zeros_like(r), {"terms": 0}
    P, q = uniformize(R)
    qt = q * float(t)
    K = _truncation(qt)
    tail = poisson.sf(np.arange(K + 1), qt) / q
    x = tail[0] * r
    v = r
    for k in range(1, K + 1):
        v = P @ v
        x += tail[k] * v
    return x, {"terms": K, "uniformization_rate": q}


def bounded_until(R, phi1, phi2, lo, hi):
    """P[phi1 U[lo,hi] phi2]; ``hi=None`` means no upper bound."""
    lo = float(lo)
    if hi is None:
        inner, _ = dtmc.until(embedded(R), phi1, phi2)
        info = {}
    else:
        width = float(hi) - lo
        stop = phi2 | ~phi1
        inner, info = transient(make_absorbing(R, stop), phi2.astype(float), width)
    if lo == 0:
        return np.clip(inner, 0.0, 1.0), info
    # first phase: remain in phi1 up to time lo
    start = np.where(phi1, inner, 0.0)
    x, info2 = transient(make_absorbing(R, ~phi1), start, lo)
    info = dict(info)
    info["terms_first_phase"] = info2.get("terms", 0)
    return np.clip(x, 0.0, 1.0), info


def check_query(m, q):
    R = m.matrix()
    body = q.body
    if q.op == "P":
        if isinstance(body, Next):
            return dtmc.next_prob(embedded(R), sat(m, body.phi)), {}
        phi1, phi2 = sat(m, body.left), sat(m, body.right)
        if body.bound is None:
            return dtmc.until(embedded(R), phi1, phi2)
        return bounded_until(R, phi1, phi2, body.bound.lo, body.bound.hi)
    if q.op == "S":
        return long_run_probability(m, sat(m, body)), {}
    rate = m.choice_rewards(q.reward)
    if isinstance(body, Cumulative):
        return accumulated(R, rate, body.bound)
    if isinstance(body, Instant):
        return transient(R, m.state_rewards(q.reward), body.time)
    if isinstance(body, Reach):
        E = exit_rates(R)
        per_visit = np.divide(rate, E, out=np.zeros_like(rate), where=E > 0)
        target = sat(m, body.target)
        # a non-target absorbing state with positive reward rate accrues forever,
        # but such a state never reaches the target, so it is already infinite
        return dtmc.reach_reward(embedded(R), per_visit, target)
    if isinstance(body, LongRun):
        return long_run_reward(m, rate), {}
    raise EngineError(f"unsupported query {q.to_text()}")
