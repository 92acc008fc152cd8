"""Value-and-gradient evaluation of dtmc properties in the model parameters.

Unbounded reachability leaves become rational functions (state elimination)
whose partials are taken symbolically.  Step-bounded leaves (``C<=k``,
``I=k``, ``U<=k``) would give polynomials of degree k, so they are instead
evaluated by forward sensitivity: the bounded recurrence is iterated together
with its derivative in every parameter, using exact symbolic partials of the
transition weights.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ParametricError, PropertyError
from ..expr import Binary, Const, Unary
from ..props import Cumulative, Instant, Next, Query, Until, parse_property
from .eliminate import (_reward_rfs, _sat, _successors, _weight_rf, eliminate_query,
                        steady_state_query)
from .poly import RationalFunction


class RationalLeaf:
    def __init__(self, rf: RationalFunction, params):
        self.rf = rf
        self.params = list(params)
        self.partials = [rf.derivative(p) for p in self.params]

    def value_grad(self, x):
        v = self.rf.evalf(x)
        g = np.array([d.evalf(x) if not d.is_zero() else 0.0 for d in self.partials])
        return v, g


class BoundedLeaf:
    """Forward-sensitivity evaluation of a step-bounded dtmc query."""

    def __init__(self, m, q: Query, params):
        self.m, self.q = m, q
        self.params = list(params)
        succ = _successors(m)
        rows, cols, rfs = [], [], []
        for s, row in enumerate(succ):
            for t, w in row.items():
                rows.append(s)
                cols.append(t)
                rfs.append(w)
        self.rows, self.cols = np.array(rows), np.array(cols)
        self.rfs = rfs
        self.partials = [[w.derivative(p) for w in rfs] for p in self.params]
        self.n = m.n
        body = q.body
        if q.op == "R":
            if isinstance(body, Instant):
                cache = {}
                r = m.reward_structure(q.reward)
                self.rew = [_weight_rf(v, cache) for v in r.state]
            else:
                self.rew = _reward_rfs(m, q.reward, succ)
            self.rew_partials = [[f.derivative(p) for f in self.rew] for p in self.params]
        elif q.op == "P" and isinstance(body, Until):
            self.phi1, self.phi2 = _sat(m, body.left), _sat(m, body.right)
        elif q.op == "P" and isinstance(body, Next):
            self.phi = _sat(m, body.phi)
        else:
            raise ParametricError(f"{q.to_text()} has no bounded sensitivity form")

    def _matrix(self, vals):
        return sp.csr_matrix((vals, (self.rows, self.cols)), shape=(self.n, self.n))

    @staticmethod
    def _eval(fs, x):
        return np.array([0.0 if f.is_zero() else f.evalf(x) for f in fs])

    def value_grad(self, x):
        P = self._matrix(self._eval(self.rfs, x))
        dP = [self._matrix(self._eval(ps, x)) for ps in self.partials]
        k = len(self.params)
        body = self.q.body
        n = self.n
        if self.q.op == "P" and isinstance(body, Next):
            phi = self.phi.astype(float)
            v = P @ phi
            g = np.array([(D @ phi)[self.m.initial] for D in dP])
            return float(v[self.m.initial]), g
        if self.q.op == "P":
            steps = int(body.bound.hi)
            phi2 = self.phi2
            cont = (self.phi1 & ~self.phi2).astype(float)
            val = phi2.astype(float)
            der = np.zeros((k, n))
            for _ in range(steps):
                new = np.where(phi2, 1.0, cont * (P @ val))
                der = np.array([cont * (dP[j] @ val + P @ der[j]) for j in range(k)]) if k else der
                val = new
        else:
            r = self._eval(self.rew, x)
            dr = [self._eval(ps, x) for ps in self.rew_partials]
            if isinstance(body, Cumulative):
                steps = int(body.bound)
                val = np.zeros(n)
                der = np.zeros((k, n))
                for _ in range(steps):
                    new = r + P @ val
                    der = np.array([dr[j] + dP[j] @ val + P @ der[j] for j in range(k)]) if k else der
                    val = new
            else:
                steps = int(body.time)
                val = r
                der = np.array(dr) if k else np.zeros((0, n))
                for _ in range(steps):
                    new = P @ val
                    der = np.array([dP[j] @ val + P @ der[j] for j in range(k)]) if k else der
                    val = new
        i = self.m.initial
        return float(val[i]), np.array([der[j][i] for j in range(k)])


class PropertyFunction:
    """A property of a parametric model as a differentiable function of its parameters.

    ``value_grad(x)`` returns the property value and its gradient with respect
    to ``params`` (ordered) at the float binding ``x``.
    """

    def __init__(self, m, prop, params):
        if isinstance(prop, str):
            prop = parse_property(prop, m.kind)
        self.m, self.prop = m, prop
        self.params = list(params)
        self._leaves = {}
        for q in _query_leaves(prop):
            if q not in self._leaves:
                self._leaves[q] = self._leaf(q)

    def _leaf(self, q):
        body = q.body
        if self.m.kind == "ctmc":
            return RationalLeaf(steady_state_query(self.m, q), self.params)
        bounded = isinstance(body, (Cumulative, Instant)) or (
            isinstance(body, Until) and body.bound is not None)
        if bounded:
            return BoundedLeaf(self.m, q, self.params)
        return RationalLeaf(eliminate_query(self.m, q), self.params)

    def rational(self):
        """The whole property as one RationalFunction, if no leaf is step-bounded."""
        from .eliminate import _fold
        if any(isinstance(leaf, BoundedLeaf) for leaf in self._leaves.values()):
            raise ParametricError("property has step-bounded parts; no closed form kept")
        return _fold(self.prop, lambda q: self._leaves[q].rf)

    def value_grad(self, x):
        x = {k: float(v) for k, v in x.items()}
        cache = {q: leaf.value_grad(x) for q, leaf in self._leaves.items()}
        return _dual_fold(self.prop, cache, len(self.params))

    def value(self, x):
        return self.value_grad(x)[0]


def _query_leaves(e):
    if isinstance(e, Query):
        return [e]
    if isinstance(e, Binary):
        return _query_leaves(e.left) + _query_leaves(e.right)
    if isinstance(e, Unary):
        return _query_leaves(e.operand)
    return []


def _dual_fold(e, leaves, k):
    if isinstance(e, Query):
        v, g = leaves[e]
        return v, np.asarray(g, dtype=float)
    if isinstance(e, Const):
        return float(e.value), np.zeros(k)
    if isinstance(e, Unary) and e.op == "-":
        v, g = _dual_fold(e.operand, leaves, k)
        return -v, -g
    if isinstance(e, Binary) and e.op in ("+", "-", "*", "/"):
        a, ga = _dual_fold(e.left, leaves, k)
        b, gb = _dual_fold(e.right, leaves, k)
        if e.op == "+":
            return a + b, ga + gb
        if e.op == "-":
            return a - b, ga - gb
        if e.op == "*":
            return a * b, ga * b + a * gb
        if b == 0:
            raise ParametricError("division by zero while combining property results")
        return a / b, (ga * b - a * gb) / (b * b)
    raise PropertyError(f"cannot combine property results with '{getattr(e, 'op', e)}'")
