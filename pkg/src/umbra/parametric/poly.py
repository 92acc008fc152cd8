"""Multivariate polynomials and rational functions with exact coefficients.

A monomial is a tuple of ``(name, exponent)`` pairs sorted by name; the
constant monomial is ``()``.  Terms are ordered graded-first (higher total
degree first), ties broken by the monomial tuple, which fixes the canonical
printed form.  GCDs for cancellation are computed in a sympy polynomial ring
over the rationals.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from ..errors import ParametricError, PoleError, UnboundParameterError

MAX_TERMS = 10 ** 5


def _mono_mul(a, b):
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for k, e in b:
        d[k] = d.get(k, 0) + e
    return tuple(sorted(d.items()))


def _degree(mono):
    return sum(e for _, e in mono)


def _order_key(mono):
    return (-_degree(mono), mono)


class Polynomial:
    __slots__ = ("terms", "_hash")

    def __init__(self, terms=None):
        terms = {m: Fraction(c) for m, c in (terms or {}).items() if c != 0}
        if len(terms) > MAX_TERMS:
            raise ParametricError(f"polynomial exceeds {MAX_TERMS} terms")
        self.terms = terms
        self._hash = None

    @classmethod
    def const(cls, c):
        return cls({(): Fraction(c)})

    @classmethod
    def var(cls, name):
        return cls({((name, 1),): Fraction(1)})

    def is_zero(self):
        return not self.terms

    def is_constant(self):
        return all(m == () for m in self.terms)

    def constant_value(self):
        return self.terms.get((), Fraction(0))

    def variables(self):
        return {k for m in self.terms for k, _ in m}

    def degree(self):
        return max((_degree(m) for m in self.terms), default=0)

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: _order_key(t[0]))

    def leading(self):
        return self.sorted_terms()[0] if self.terms else ((), Fraction(0))

    def __add__(self, other):
        other = _poly(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_poly(other))

    def __rsub__(self, other):
        return _poly(other) - self

    def __mul__(self, other):
        other = _poly(other)
        if len(self.terms) * len(other.terms) > MAX_TERMS * 10:
            raise ParametricError(f"polynomial product too large (> {MAX_TERMS} terms)")
        out = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial(out)

    __rmul__ = __mul__

    def scale(self, c):
        c = Fraction(c)
        return Polynomial({m: v * c for m, v in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            try:
                other = _poly(other)
            except TypeError:
                return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def eval(self, binding):
        total = Fraction(0)
        for m, c in self.terms.items():
            v = c
            for k, e in m:
                try:
                    v *= Fraction(binding[k]) ** e
                except KeyError:
                    raise UnboundParameterError(k) from None
            total += v
        return total

    def evalf(self, binding):
        total = 0.0
        for m, c in self.terms.items():
            v = float(c)
            for k, e in m:
                v *= binding[k] ** e
            total += v
        return total

    def derivative(self, name):
        out = {}
        for m, c in self.terms.items():
            d = dict(m)
            e = d.get(name, 0)
            if e == 0:
                continue
            if e == 1:
                del d[name]
            else:
                d[name] = e - 1
            mono = tuple(sorted(d.items()))
            out[mono] = out.get(mono, 0) + c * e
        return Polynomial(out)

    def to_text(self):
        if not self.terms:
            return "0"
        parts = []
        for i, (m, c) in enumerate(self.sorted_terms()):
            sign = "-" if c < 0 else "+"
            a = abs(c)
            factors = [k if e == 1 else f"{k}^{e}" for k, e in m]
            coef = str(a)
            if factors:
                body = "*".join(factors) if a == 1 else coef + "*" + "*".join(factors)
            else:
                body = coef
            if i == 0:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(f" {sign} {body}")
        return "".join(parts)

    def __repr__(self):
        return f"Polynomial({self.to_text()})"


def _poly(x):
    if isinstance(x, Polynomial):
        return x
    if isinstance(x, (int, Fraction)):
        return Polynomial.const(x)
    raise TypeError(f"cannot make a polynomial from {type(x).__name__}")


# ------------------------------------------------------------------- gcd

@lru_cache(maxsize=64)
def _ring(gens):
    from sympy import QQ
    from sympy.polys.rings import ring
    R, *_ = ring(",".join(gens), QQ)
    return R


def _to_ring(p, gens, R):
    index = {g: i for i, g in enumerate(gens)}
    d = {}
    for m, c in p.terms.items():
        exps = [0] * len(gens)
        for k, e in m:
            exps[index[k]] = e
        d[tuple(exps)] = R.domain.convert(c)
    return R.from_dict(d) if d else R.zero


def _from_ring(q, gens):
    out = {}
    for exps, c in q.items():
        mono = tuple((gens[i], e) for i, e in enumerate(exps) if e)
        out[mono] = Fraction(int(c.numerator), int(c.denominator))
    return Polynomial(out)


def cancel(num, den):
    """Divide *num* and *den* by their polynomial gcd."""
    if num.is_zero():
        return num, Polynomial.const(1)
    if den.is_constant() or num.is_constant():
        return num, den
    gens = tuple(sorted(num.variables() | den.variables()))
    R = _ring(gens)
    a, b = _to_ring(num, gens, R), _to_ring(den, gens, R)
    g, qa, qb = a.cofactors(b)
    if g.is_ground:
        return num, den
    return _from_ring(qa, gens), _from_ring(qb, gens)


# ---------------------------------------------------------- rational function

class RationalFunction:
    """``num / den`` in lowest terms with a monic denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=None, *, reduce=True):
        num = _poly(num)
        den = Polynomial.const(1) if den is None else _poly(den)
        if den.is_zero():
            raise ParametricError("rational function with zero denominator")
        if reduce:
            num, den = cancel(num, den)
            lead = den.leading()[1]
            if lead != 1:
                num, den = num.scale(1 / lead), den.scale(1 / lead)
        self.num = num
        self.den = den

    @classmethod
    def const(cls, c):
        return cls(Polynomial.const(c), reduce=False)

    @classmethod
    def var(cls, name):
        return cls(Polynomial.var(name), reduce=False)

    def is_zero(self):
        return self.num.is_zero()

    def is_constant(self):
        return self.num.is_constant() and self.den.is_constant()

    def constant_value(self):
        if not self.is_constant():
            raise ParametricError(f"{self.to_text()} is not constant")
        return self.num.constant_value() / self.den.constant_value()

    def variables(self):
        return self.num.variables() | self.den.variables()

    def __add__(self, other):
        other = _rf(other)
        if self.den == other.den:
            return RationalFunction(self.num + other.num, self.den)
        return RationalFunction(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den, reduce=False)

    def __sub__(self, other):
        return self + (-_rf(other))

    def __rsub__(self, other):
        return _rf(other) - self

    def __mul__(self, other):
        other = _rf(other)
        if self.is_zero() or other.is_zero():
            return RationalFunction.const(0)
        return RationalFunction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _rf(other)
        if other.is_zero():
            raise PoleError("division by the zero rational function")
        return RationalFunction(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        return _rf(other) / self

    def __eq__(self, other):
        try:
            other = _rf(other)
        except TypeError:
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def eval(self, binding):
        d = self.den.eval(binding)
        if d == 0:
            raise PoleError(f"denominator {self.den.to_text()} vanishes at {dict(binding)}")
        return self.num.eval(binding) / d

    def evalf(self, binding):
        d = self.den.evalf(binding)
        if d == 0:
            raise PoleError(f"denominator {self.den.to_text()} vanishes at {dict(binding)}")
        return self.num.evalf(binding) / d

    def derivative(self, name):
        # quotient rule: (n'd - nd') / d^2
        dn, dd = self.num.derivative(name), self.den.derivative(name)
        if dd.is_zero():
            return RationalFunction(dn, self.den)
        return RationalFunction(dn * self.den - self.num * dd, self.den * self.den)

    def to_text(self):
        if self.den == Polynomial.const(1):
            return self.num.to_text()
        return f"({self.num.to_text()})/({self.den.to_text()})"

    def __repr__(self):
        return f"RationalFunction({self.to_text()})"


def _rf(x):
    if isinstance(x, RationalFunction):
        return x
    if isinstance(x, Polynomial):
        return RationalFunction(x, reduce=False)
    if isinstance(x, (int, Fraction)):
        return RationalFunction.const(x)
    raise TypeError(f"cannot make a rational function from {type(x).__name__}")


def from_expr(e):
    """Convert an arithmetic :class:`~umbra.expr.Expr` into a RationalFunction."""
    from ..expr import Binary, BoolLit, Const, Param, Unary, Var
    if isinstance(e, (int, Fraction)):
        return RationalFunction.const(e)
    if isinstance(e, Const):
        return RationalFunction.const(e.value)
    if isinstance(e, BoolLit):
        return RationalFunction.const(int(e.value))
    if isinstance(e, (Param, Var)):
        return RationalFunction.var(e.name)
    if isinstance(e, Unary) and e.op == "-":
        return -from_expr(e.operand)
    if isinstance(e, Binary) and e.op in ("+", "-", "*", "/"):
        a, b = from_expr(e.left), from_expr(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    raise ParametricError(f"expression {e} is not a rational function of its parameters")
