"""PCTL/CSL property subset with rewards, and the parametric feasibility rule.

A property is an expression tree whose leaves are :class:`Query` nodes (P, R
or S operators) and numeric constants, so post-processing such as
``R{"low"}=?[C<=3600]/3600`` or a ratio of two queries is represented
directly.  Inside a query, state formulas are ordinary boolean expressions
over model variables plus quoted :class:`Label` references; nested queries
are parsed but rejected by the engines.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import PropertyError
from .expr import (Binary, BoolLit, Const, Expr, ExprParser, Unary, to_text,
                   walk)
from .lexer import EOF, NAME, NUM, OP, STRING, TokenStream

DISCRETE = ("dtmc", "mdp", "pomdp")
NONDETERMINISTIC = ("mdp", "pomdp")
_QUERY_NAMES = {"P": ("P", None), "Pmin": ("P", "min"), "Pmax": ("P", "max"),
                "R": ("R", None), "Rmin": ("R", "min"), "Rmax": ("R", "max"),
                "S": ("S", None)}
_BOUND_OPS = (">=", ">", "<=", "<")


@dataclass(frozen=True)
class Label(Expr):
    name: str

    def to_text(self):
        return f'"{self.name}"'


@dataclass(frozen=True)
class Interval:
    """Time or step window ``[lo, hi]``; ``hi=None`` means unbounded."""
    lo: Fraction
    hi: Fraction | None

    def to_text(self):
        if self.lo == 0 and self.hi is not None:
            return f"<={_num(self.hi)}"
        if self.hi is None:
            return f">={_num(self.lo)}"
        return f"[{_num(self.lo)},{_num(self.hi)}]"


def _num(q):
    return to_text(Const(Fraction(q)))


@dataclass(frozen=True)
class Next:
    phi: Expr

    def to_text(self):
        return f"X {to_text(self.phi)}"

    def formulas(self):
        return (self.phi,)


@dataclass(frozen=True)
class Until:
    left: Expr
    right: Expr
    bound: Interval | None = None
    eventually: bool = False  # printed as F

    def to_text(self):
        b = self.bound.to_text() if self.bound is not None else ""
        if self.eventually:
            return f"F{b} {to_text(self.right)}"
        sep = b if b.startswith("[") else (b or "")
        return f"{to_text(self.left)} U{sep} {to_text(self.right)}"

    def formulas(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Cumulative:
    bound: Fraction

    def to_text(self):
        return f"C<={_num(self.bound)}"

    def formulas(self):
        return ()


@dataclass(frozen=True)
class Instant:
    time: Fraction

    def to_text(self):
        return f"I={_num(self.time)}"

    def formulas(self):
        return ()


@dataclass(frozen=True)
class Reach:
    target: Expr

    def to_text(self):
        return f"F {to_text(self.target)}"

    def formulas(self):
        return (self.target,)


@dataclass(frozen=True)
class LongRun:
    def to_text(self):
        return "S"

    def formulas(self):
        return ()


@dataclass(frozen=True)
class Query(Expr):
    """A P, R or S operator in query (``=?``) or bound (``>=p``) form."""
    op: str
    body: object  # Next | Until (P); Cumulative | Instant | Reach | LongRun (R); Expr (S)
    opt: str | None = None  # "min" | "max"
    comparison: str | None = None  # None for "=?"
    threshold: Fraction | None = None
    reward: str | None = None

    @property
    def is_query(self):
        return self.comparison is None

    def formulas(self):
        if self.op == "S":
            return (self.body,)
        return self.body.formulas()

    def children(self):
        return self.formulas()

    def to_text(self):
        head = self.op
        if self.reward is not None:
            head += '{"' + self.reward + '"}'
        if self.opt:
            head += self.opt
        if self.comparison is None:
            head += "=?"
        else:
            head += f"{self.comparison}{_num(self.threshold)}"
        body = to_text(self.body) if self.op == "S" else self.body.to_text()
        return f"{head} [{body}]"


# ---------------------------------------------------------------------- parser

class _PropertyParser:
    def __init__(self, text):
        self.s = TokenStream(text)
        self.ep = ExprParser(self.s, self._primary)

    def _looks_like_query(self):
        s = self.s
        tok = s.current
        if tok.kind != NAME or tok.value not in _QUERY_NAMES:
            return False
        nxt = s.peek()
        if tok.value.startswith("R") and nxt.value == "{":
            return True
        if nxt.kind == NAME and nxt.value in ("min", "max"):
            return True
        if nxt.value == "=" and s.peek(2).value == "?":
            return True
        if nxt.kind == OP and nxt.value in _BOUND_OPS and s.peek(2).kind == NUM:
            return s.peek(3).value == "["
        return False

    def _primary(self, ep):
        s = self.s
        if s.current.kind == STRING:
            return Label(s.advance().value)
        if self._looks_like_query():
            return self.query()
        return None

    def number(self):
        tok = self.s.expect_kind(NUM)
        return Fraction(tok.value)

    def query(self):
        s = self.s
        op, opt = _QUERY_NAMES[s.advance().value]
        reward = None
        if op == "R" and s.accept("{"):
            if s.current.kind == STRING:
                reward = s.advance().value
            else:
                s.error("expected reward structure name", ["string"])
            s.expect("}")
        if s.at_kind(NAME) and s.current.value in ("min", "max"):
            if opt is not None or op == "S":
                s.error("unexpected min/max qualifier")
            opt = s.advance().value
        comparison = threshold = None
        if s.accept("="):
            s.expect("?")
        elif s.current.kind == OP and s.current.value in _BOUND_OPS:
            comparison = s.advance().value
            threshold = self.number()
        else:
            s.error(f"unexpected {s.current.describe()}", ["'=?'", "comparison"])
        s.expect("[")
        if op == "P":
            body = self.path()
        elif op == "R":
            body = self.reward_body()
        else:
            body = self.ep.parse()
        s.expect("]")
        return Query(op, body, opt, comparison, threshold, reward)

    def bound(self, allow_interval=True):
        s = self.s
        if s.accept("<="):
            return Interval(Fraction(0), self.number())
        if s.accept("<"):
            s.error("strict time bounds are not supported; use <=")
        if s.accept(">="):
            return Interval(self.number(), None)
        if allow_interval and s.at("["):
            s.advance()
            lo = self.number()
            s.expect(",")
            hi = self.number()
            s.expect("]")
            if not 0 <= lo <= hi:
                raise PropertyError(f"interval [{lo},{hi}] must satisfy 0 <= t1 <= t2")
            return Interval(lo, hi)
        return None

    def path(self):
        s = self.s
        if s.at("X", NAME):
            s.advance()
            return Next(self.ep.parse())
        if s.at("F", NAME):
            s.advance()
            b = self.bound()
            return Until(BoolLit(True), self.ep.parse(), b, eventually=True)
        if s.at("G", NAME):
            s.error("G (globally) path formulas are not supported")
        left = self.ep.parse()
        if not s.at("U", NAME):
            s.error(f"unexpected {s.current.describe()}", ["'U'"])
        s.advance()
        b = self.bound()
        right = self.ep.parse()
        return Until(left, right, b)

    def reward_body(self):
        s = self.s
        if s.at("C", NAME):
            s.advance()
            s.expect("<=")
            return Cumulative(self.number())
        if s.at("I", NAME):
            s.advance()
            s.expect("=")
            return Instant(self.number())
        if s.at("F", NAME):
            s.advance()
            return Reach(self.ep.parse())
        if s.at("S", NAME):
            s.advance()
            return LongRun()
        s.error(f"unexpected {s.current.describe()}", ["'C<='", "'I='", "'F'", "'S'"])

    def parse(self):
        e = self.ep.parse()
        if self.s.current.kind != EOF:
            self.s.error(f"unexpected {self.s.current.describe()}", ["operator", EOF])
        return e


def queries(prop) -> list:
    """Top-level query leaves of a property (not those nested in state formulas)."""
    if isinstance(prop, Query):
        return [prop]
    if isinstance(prop, Binary):
        return queries(prop.left) + queries(prop.right)
    if isinstance(prop, Unary):
        return queries(prop.operand)
    return []


def nested_queries(q: Query) -> list:
    out = []
    for f in q.formulas():
        out.extend(n for n in walk(f) if isinstance(n, Query))
    return out


def _check_kind(q: Query, kind: str):
    if kind not in ("dtmc", "ctmc", "mdp", "pomdp"):
        raise PropertyError(f"unknown model kind '{kind}'")
    if q.opt is not None and kind not in NONDETERMINISTIC:
        raise PropertyError(f"{q.op}{q.opt} is only meaningful for mdp/pomdp models, not {kind}")
    if kind in NONDETERMINISTIC and q.is_query and q.op != "S" and q.opt is None:
        raise PropertyError(f"{q.op}=? on a {kind} needs a min or max qualifier")
    if q.op == "S" or (q.op == "R" and isinstance(q.body, LongRun)):
        if kind in NONDETERMINISTIC:
            raise PropertyError(f"steady-state operators are not supported on {kind} models")
    discrete = kind in DISCRETE
    body = q.body
    if isinstance(body, Until) and body.bound is not None:
        b = body.bound
        if discrete:
            if b.lo != 0 or b.hi is None:
                raise PropertyError("interval time bounds are only allowed for ctmc models")
            if b.hi.denominator != 1:
                raise PropertyError(f"step bound {b.hi} must be a non-negative integer")
    if isinstance(body, (Cumulative, Instant)) and discrete:
        k = body.bound if isinstance(body, Cumulative) else body.time
        if k < 0 or k.denominator != 1:
            raise PropertyError(f"step bound {k} must be a non-negative integer")
    if q.comparison is not None and q.op in ("P", "S"):
        if not 0 <= q.threshold <= 1:
            raise PropertyError(f"probability bound {q.threshold} outside [0,1]")
    for inner in nested_queries(q):
        _check_kind(inner, kind)


def parse_property(text: str, kind: str):
    """Parse *text* and check it against the model *kind*."""
    prop = _PropertyParser(text).parse()
    qs = queries(prop)
    if not qs:
        raise PropertyError("property contains no P, R or S operator")
    for n in walk(prop):
        if isinstance(n, Label) and n not in _labels_inside(qs):
            raise PropertyError("labels may only appear inside an operator")
    for q in qs:
        _check_kind(q, kind)
    if len(qs) > 1 or not isinstance(prop, Query):
        if any(not q.is_query for q in qs):
            raise PropertyError("bound-form operators cannot be combined arithmetically")
    return prop


def _labels_inside(qs):
    found = set()
    for q in qs:
        for f in q.formulas():
            found.update(n for n in walk(f) if isinstance(n, Label))
    return found


def property_text(prop) -> str:
    return to_text(prop)


def is_numeric(prop) -> bool:
    """True if the property evaluates to a number (query form throughout)."""
    return all(q.is_query for q in queries(prop))


def parametric_feasible(props, kinds) -> bool:
    """Whether every property can be checked by parametric model checking.

    dtmc: P or R queries whose state formulas nest no operator (step bounds
    allowed).  ctmc: non-transient properties, i.e. steady-state S or R[S].
    """
    for prop, kind in zip(props, kinds, strict=True):
        for q in queries(prop):
            if not q.is_query or q.opt is not None or nested_queries(q):
                return False
            if kind == "dtmc":
                if q.op == "S" or (q.op == "R" and isinstance(q.body, LongRun)):
                    return False
            elif kind == "ctmc":
                if not (q.op == "S" or (q.op == "R" and isinstance(q.body, LongRun))):
                    return False
            else:
                return False
    return True
