"""State elimination for parametric dtmcs, and exact ctmc steady state.

Reachability is treated as a linear system solved by Gaussian elimination
over rational functions.  Every remaining state ``s`` keeps outgoing weights
``p[s][v]`` to other remaining states and a constant part ``c[s]`` (the
one-step probability of entering the target, or the expected one-step
reward).  Removing ``s`` reroutes each predecessor ``u`` through it:

    f = p[u][s] / (1 - p[s][s])
    c[u] += f * c[s]
    p[u][v] += f * p[s][v]          for every successor v != s

When only the initial state is left, the answer is ``c[I] / (1 - p[I][I])``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..errors import ParametricError, PoleError, PropertyError
from ..expr import Binary, Const, Unary
from ..props import LongRun, Next, Query, Reach, Until
from .poly import RationalFunction, from_expr

ONE = RationalFunction.const(1)
ZERO = RationalFunction.const(0)


def _weight_rf(w, cache):
    rf = cache.get(w)
    if rf is None:
        rf = RationalFunction.const(w) if isinstance(w, Fraction) else from_expr(w)
        cache[w] = rf
    return rf


def _successors(m):
    """Per state: dict target -> RationalFunction (single choice per state)."""
    cache = {}
    out = []
    for s in range(m.n):
        if len(m.choices[s]) != 1:
            raise ParametricError(f"state {m.describe_state(s)} has several choices")
        row = {}
        for t in m.choices[s][0].transitions:
            rf = _weight_rf(t.weight, cache)
            row[t.target] = row[t.target] + rf if t.target in row else rf
        out.append({k: v for k, v in row.items() if not v.is_zero()})
    return out


def _graph_sets(succ, phi1, phi2):
    """Structural prob-0 / prob-1 sets (weights taken as generically non-zero)."""
    n = len(succ)
    pred = [[] for _ in range(n)]
    for s, row in enumerate(succ):
        for t in row:
            pred[t].append(s)

    def back(start, allowed):
        seen = set(start)
        stack = list(start)
        while stack:
            t = stack.pop()
            for s in pred[t]:
                if s not in seen and allowed[s]:
                    seen.add(s)
                    stack.append(s)
        return seen

    some = back([s for s in range(n) if phi2[s]], phi1)
    no = np.array([s not in some for s in range(n)])
    fail = back([s for s in range(n) if no[s]], phi1 & ~phi2)
    yes = np.array([s not in fail for s in range(n)])
    return no, yes


def _min_degree_order(succ, pred, keep):
    """Yield states to eliminate, cheapest (fewest in x out pairs) first."""
    remaining = set(succ) - {keep}
    while remaining:
        best = min(remaining, key=lambda s: (len(pred[s] - {s}) * len(set(succ[s]) - {s}), s))
        remaining.discard(best)
        yield best


ORDERS = ("min_degree", "index", "reverse")


def _order(order, p, pred, init):
    if order == "min_degree":
        return _min_degree_order(p, pred, init)
    rest = sorted(set(p) - {init})
    if order == "index":
        return rest
    if order == "reverse":
        return rest[::-1]
    raise ParametricError(f"unknown elimination order '{order}' (use {', '.join(ORDERS)})")


def _solve(m, succ, const, maybe, order="min_degree"):
    """Eliminate all maybe states except the initial one; return its value."""
    init = m.initial
    keep = [s for s in range(m.n) if maybe[s]]
    p = {s: {t: w for t, w in succ[s].items() if maybe[t]} for s in keep}
    c = {s: const[s] for s in keep}
    pred = {s: set() for s in keep}
    for s in keep:
        for t in p[s]:
            pred[t].add(s)
    trace = []
    for s in _order(order, p, pred, init):
        loop = p[s].pop(s, ZERO)
        pred[s].discard(s)
        stay = ONE - loop
        if stay.is_zero():
            raise PoleError(f"state {m.describe_state(s)} is a closed loop; eliminated so far: {trace}")
        out = p.pop(s)
        cs = c.pop(s)
        for u in pred.pop(s):
            f = p[u].pop(s) / stay
            if not cs.is_zero():
                c[u] = c[u] + f * cs
            for v, w in out.items():
                nw = f * w
                if v in p[u]:
                    nw = p[u][v] + nw
                if nw.is_zero():
                    p[u].pop(v, None)
                    pred[v].discard(u)
                else:
                    p[u][v] = nw
                    pred[v].add(u)
        for v in out:
            pred[v].discard(s)
        trace.append(m.describe_state(s))
    loop = p[init].get(init, ZERO)
    stay = ONE - loop
    if stay.is_zero():
        raise PoleError(f"initial state is a closed loop; eliminated: {trace}")
    return c[init] / stay


def _sat(m, formula):
    from ..engines.states import sat
    return sat(m, formula)


def _reward_rfs(m, name, succ):
    r = m.reward_structure(name)
    cache = {}
    out = []
    for s in range(m.n):
        total = _weight_rf(r.state[s], cache)
        if r.transition:
            for t in m.choices[s][0].transitions:
                iota = r.transition.get((s, t.action))
                if iota is not None:
                    total = total + _weight_rf(t.weight, cache) * _weight_rf(iota, cache)
        out.append(total)
    return out


def eliminate_query(m, q: Query, order="min_degree") -> RationalFunction:
    if m.kind != "dtmc":
        raise ParametricError(f"state elimination needs a dtmc, not a {m.kind}")
    if not q.is_query or q.opt is not None:
        raise ParametricError(f"{q.to_text()} is not a plain =? query")
    body = q.body
    succ = _successors(m)
    n = m.n
    if q.op == "P" and isinstance(body, Next):
        phi = _sat(m, body.phi)
        acc = ZERO
        for t, w in succ[m.initial].items():
            if phi[t]:
                acc = acc + w
        return acc
    if q.op == "P" and isinstance(body, Until) and body.bound is None:
        phi1, phi2 = _sat(m, body.left), _sat(m, body.right)
        no, yes = _graph_sets(succ, phi1, phi2)
        if yes[m.initial]:
            return ONE
        if no[m.initial]:
            return ZERO
        maybe = ~(no | yes)
        const = [ZERO] * n
        for s in np.flatnonzero(maybe):
            acc = ZERO
            for t, w in succ[s].items():
                if yes[t]:
                    acc = acc + w
            const[s] = acc
        return _solve(m, succ, const, maybe, order)
    if q.op == "R" and isinstance(body, Reach):
        target = _sat(m, body.target)
        _, yes = _graph_sets(succ, np.ones(n, dtype=bool), target)
        if target[m.initial]:
            return ZERO
        if not yes[m.initial]:
            raise ParametricError("expected reward is infinite (target not reached almost surely)")
        maybe = yes & ~target
        const = _reward_rfs(m, q.reward, succ)
        return _solve(m, succ, const, maybe, order)
    raise ParametricError(f"{q.to_text()} cannot be computed by state elimination")


def _fold(e, leaf):
    if isinstance(e, Query):
        return leaf(e)
    if isinstance(e, Const):
        return RationalFunction.const(e.value)
    if isinstance(e, Unary) and e.op == "-":
        return -_fold(e.operand, leaf)
    if isinstance(e, Binary) and e.op in ("+", "-", "*", "/"):
        a, b = _fold(e.left, leaf), _fold(e.right, leaf)
        return {"+": a.__add__, "-": a.__sub__, "*": a.__mul__, "/": a.__truediv__}[e.op](b)
    raise PropertyError(f"cannot combine property results with '{getattr(e, 'op', e)}'")


def eliminate_states(m, prop, order="min_degree") -> RationalFunction:
    """Closed-form result of *prop* on parametric dtmc *m* as a RationalFunction.

    *order* picks the elimination sequence; every order gives the same function.
    """
    if isinstance(prop, str):
        from ..props import parse_property
        prop = parse_property(prop, m.kind)
    if m.kind == "ctmc":
        return _fold(prop, lambda q: steady_state_query(m, q))
    return _fold(prop, lambda q: eliminate_query(m, q, order))


# ------------------------------------------------------------- ctmc steady state

def _exact_stationary(rates, idx):
    """Solve pi Q = 0, sum pi = 1 over the states *idx* with Fractions."""
    k = len(idx)
    if k == 1:
        return [Fraction(1)]
    pos = {s: i for i, s in enumerate(idx)}
    A = [[Fraction(0)] * k for _ in range(k)]
    for s in idx:
        i = pos[s]
        for t, r in rates[s].items():
            if t in pos and t != s:
                A[pos[t]][i] += r
                A[i][i] -= r
    A[k - 1] = [Fraction(1)] * k
    b = [Fraction(0)] * (k - 1) + [Fraction(1)]
    for col in range(k):
        piv = next((r for r in range(col, k) if A[r][col] != 0), None)
        if piv is None:
            raise ParametricError("singular steady-state system")
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(k):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
                b[r] -= f * b[col]
    return [b[i] / A[i][i] for i in range(k)]


def steady_state_query(m, q: Query) -> RationalFunction:
    """S=?[phi] or R=?[S] on a ctmc whose rates share one parametric factor.

    The long-run distribution is then parameter-free and is computed exactly;
    rewards may still depend on parameters.  Anything else is rejected and
    left to the numeric path.
    """
    if not (q.op == "S" or (q.op == "R" and isinstance(q.body, LongRun))) or not q.is_query:
        raise ParametricError(f"{q.to_text()} is not a steady-state query")
    succ = _successors(m)
    ref = next((w for row in succ for w in row.values() if not w.is_constant()), None)
    rates = []
    for row in succ:
        out = {}
        for t, w in row.items():
            ratio = w / ref if ref is not None else w
            if not ratio.is_constant():
                raise ParametricError("ctmc rates are not a common parametric multiple of constants")
            out[t] = ratio.constant_value()
        rates.append(out)
    from scipy.sparse.csgraph import connected_components
    import scipy.sparse as sp
    rows = [s for s, row in enumerate(rates) for _ in row]
    cols = [t for row in rates for t in row]
    G = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m.n, m.n))
    _, comp = connected_components(G, directed=True, connection="strong")
    bottom = set(comp.tolist())
    for s, row in enumerate(rates):
        for t in row:
            if comp[s] != comp[t]:
                bottom.discard(comp[s])
    init_reach = _reachable(rates, m.initial)
    reached = sorted({comp[s] for s in init_reach} & bottom)
    if len(reached) != 1:
        raise ParametricError("exact steady state needs a single reachable bottom component")
    idx = [s for s in range(m.n) if comp[s] == reached[0]]
    pi = _exact_stationary(rates, idx)
    if q.op == "S":
        phi = _sat(m, q.body)
        return RationalFunction.const(sum((p for s, p in zip(idx, pi) if phi[s]), Fraction(0)))
    r = _reward_rfs(m, q.reward, succ)
    total = ZERO
    for s, p in zip(idx, pi):
        if p != 0 and not r[s].is_zero():
            total = total + r[s] * RationalFunction.const(p)
    return total


def _reachable(rates, start):
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for t in rates[s]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


# ------------------------------------------------------------------- helpers

def eval_rf(f: RationalFunction, binding) -> Fraction:
    """Exact value of *f*; raises PoleError where the denominator vanishes."""
    return f.eval({k: Fraction(v) for k, v in binding.items()})


def rf_partials(f: RationalFunction, names=None) -> dict:
    """Partial derivatives of *f*; by default with respect to its own parameters."""
    if names is None:
        names = sorted(f.variables())
    return {name: f.derivative(name) for name in names}
