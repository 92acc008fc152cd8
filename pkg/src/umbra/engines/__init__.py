"""Numeric model checking of fully bound explicit models.

:func:`check` evaluates every query leaf of a property on the initial state
and folds the surrounding arithmetic.  ``check_dtmc`` and friends are the
same entry point restricted to one model kind.
"""

from __future__ import annotations

import numpy as np

from ..errors import EngineError, PropertyError
from ..expr import Binary, Const, Unary
from ..props import Query, parse_property, queries
from . import ctmc, dtmc, mdp, pomdp
from .result import PROB_EPS, VerificationResult
from .states import sat
from .steady import compute_steady_state

__all__ = ["VerificationResult", "check", "check_dtmc", "check_ctmc", "check_mdp",
           "check_pomdp", "compute_steady_state", "sat", "evaluate_query"]


def _probability(v, what):
    if not (-PROB_EPS <= v <= 1 + PROB_EPS):
        raise EngineError(f"{what} produced probability {v} outside [0,1]")
    return min(max(v, 0.0), 1.0)


def evaluate_query(m, q: Query, pomdp_cap=pomdp.DEFAULT_POLICY_CAP):
    """Return (value at initial state, per-state vector, policy rows, diagnostics)."""
    rows = None
    if m.kind == "dtmc":
        vec, info = dtmc.check_query(m, q)
    elif m.kind == "ctmc":
        vec, info = ctmc.check_query(m, q)
    elif m.kind == "mdp":
        vec, rows, info = mdp.check_query(m, q)
    elif m.kind == "pomdp":
        vec, rows, info = pomdp.check_query(m, q, cap=pomdp_cap)
    else:
        raise EngineError(f"unknown model kind {m.kind}")
    vec = np.asarray(vec, dtype=float)
    v = float(vec[m.initial])
    if q.op in ("P", "S"):
        v = _probability(v, q.to_text())
    elif v < 0:
        if v < -PROB_EPS:
            raise EngineError(f"{q.to_text()} produced negative reward {v}")
        v = 0.0
    return v, vec, rows, info


def _compare(v, op, threshold):
    t = float(threshold)
    return {">=": v >= t, ">": v > t, "<=": v <= t, "<": v < t}[op]


def _reachable_policy(m, rows):
    """State description -> action, for reachable states that have a real choice."""
    M, _ = m.choice_matrix()
    P = M[rows]
    seen = {m.initial}
    stack = [m.initial]
    while stack:
        s = stack.pop()
        for t in P[s].indices:
            if t not in seen:
                seen.add(t)
                stack.append(int(t))
    out = {}
    offsets = m.choice_matrix()[1]
    for s in sorted(seen):
        if len(m.choices[s]) < 2:
            continue
        ch = m.choices[s][rows[s] - offsets[s]]
        out[m.describe_state(s)] = ch.action
    return out


def check(m, prop, *, pomdp_cap=pomdp.DEFAULT_POLICY_CAP) -> VerificationResult:
    """Check *prop* (text or parsed) on the fully bound model *m*."""
    if isinstance(prop, str):
        prop = parse_property(prop, m.kind)
    if not m.is_bound():
        raise EngineError(f"model has unbound parameters {sorted(m.parameters)}")
    diagnostics = {}
    values = {}
    last = None
    for i, q in enumerate(queries(prop)):
        if q in values:
            continue
        v, vec, rows, info = evaluate_query(m, q, pomdp_cap)
        if not q.is_query:
            v = _compare(v, q.comparison, q.threshold)
        values[q] = v
        key = q.to_text() if len(values) > 1 or not isinstance(prop, Query) else None
        if key is None:
            diagnostics.update(info)
        else:
            diagnostics[key] = info
        last = (vec, rows, info)
    value = _fold(prop, values)
    vec, rows, info = last
    policy = None
    if m.kind == "mdp" and rows is not None:
        policy = _reachable_policy(m, rows)
    elif m.kind == "pomdp":
        policy = {",".join(f"{k}={v}" for k, v in zip(m.observables, m.observation_values[o])): a
                  for o, a in info["observation_policy"].items() if a is not None}
    return VerificationResult(value, vec, policy, diagnostics)


def _fold(e, values):
    if isinstance(e, Query):
        return values[e]
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Unary) and e.op == "-":
        return -_fold(e.operand, values)
    if isinstance(e, Binary) and e.op in ("+", "-", "*", "/"):
        a, b = _fold(e.left, values), _fold(e.right, values)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            raise EngineError("division by zero while combining property results")
        return a / b
    raise PropertyError(f"cannot combine property results with '{getattr(e, 'op', e)}'")


def _kind_checker(kind):
    def run(m, prop, **kw):
        if m.kind != kind:
            raise PropertyError(f"check_{kind} called on a {m.kind} model")
        return check(m, prop, **kw)
    run.__name__ = f"check_{kind}"
    run.__doc__ = f"Check a property on a fully bound {kind} model."
    return run


check_dtmc = _kind_checker("dtmc")
check_ctmc = _kind_checker("ctmc")
check_mdp = _kind_checker("mdp")
check_pomdp = _kind_checker("pomdp")
