"""Vectorised evaluation of state formulas over an explicit model."""

from __future__ import annotations

import numpy as np

from ..errors import EngineError, PropertyError
from ..expr import BoolLit, Binary, Const, Param, Unary, Var
from ..props import Label, Query


def _value(m, e):
    n = m.n
    if isinstance(e, Const):
        return np.full(n, float(e.value))
    if isinstance(e, BoolLit):
        return np.full(n, e.value, dtype=bool)
    if isinstance(e, (Var, Param)):
        if e.name in m.variables:
            return m.var_values(e.name)
        if e.name in m.constants:
            v = m.constants[e.name]
            return np.full(n, v if isinstance(v, bool) else float(v))
        raise PropertyError(f"unknown identifier '{e.name}' in property")
    if isinstance(e, Label):
        try:
            return m.labels[e.name]
        except KeyError:
            known = ", ".join(sorted(m.labels))
            raise PropertyError(f"unknown label \"{e.name}\" (model has: {known})") from None
    if isinstance(e, Query):
        raise EngineError("nested P/R/S operators inside state formulas are not supported")
    if isinstance(e, Unary):
        v = _value(m, e.operand)
        return ~v.astype(bool) if e.op == "!" else -v
    if isinstance(e, Binary):
        a, b = _value(m, e.left), _value(m, e.right)
        op = e.op
        if op == "&":
            return a.astype(bool) & b.astype(bool)
        if op == "|":
            return a.astype(bool) | b.astype(bool)
        if op == "=":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if np.any(b == 0):
            raise EngineError("division by zero in state formula")
        return a / b
    raise PropertyError(f"unsupported state formula node {type(e).__name__}")


def sat(m, formula) -> np.ndarray:
    """Boolean vector of the states satisfying *formula*."""
    v = _value(m, formula)
    if v.dtype != bool:
        raise PropertyError("state formula is not boolean")
    return np.asarray(v, dtype=bool)
