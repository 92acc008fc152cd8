"""Arithmetic and boolean expressions over named parameters and state variables.

Values are exact: literals parse to :class:`fractions.Fraction` (``0.1`` is
``1/10``) and evaluation stays in rational arithmetic.  Engines convert to
floating point only when assembling matrices.

Operator precedence, tightest first::

    unary - !   >   * /   >   + -   >   = != < <= > >=   >   &   >   |
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

from .errors import EvalError, UnboundParameterError
from .lexer import EOF, NAME, NUM, OP, TokenStream

Binding = Mapping[str, Fraction]

ARITH_OPS = ("+", "-", "*", "/")
COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")
BOOL_OPS = ("&", "|")

_PREC = {"|": 1, "&": 2, "=": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5}
_UNARY_PREC = 6
_ATOM_PREC = 7


class Expr:
    """Base class of expression nodes.  Nodes are immutable and hashable."""

    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction


@dataclass(frozen=True, eq=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True, eq=True)
class Param(Expr):
    """Reference to a named constant; unbound ones are model parameters."""
    name: str


@dataclass(frozen=True, eq=True)
class Var(Expr):
    """Reference to an integer (or boolean) state variable."""
    name: str


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str
    operand: Expr


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


def const(value) -> Const:
    return Const(Fraction(value))


# --------------------------------------------------------------------- parsing

class ExprParser:
    """Precedence-climbing parser over a :class:`TokenStream`.

    ``primary_hook(stream)`` may return a node for tokens the core grammar does
    not know (property operators, quoted labels); returning ``None`` defers to
    the default primaries.
    """

    def __init__(self, stream: TokenStream, primary_hook=None):
        self.s = stream
        self.primary_hook = primary_hook

    def parse(self, min_prec=1) -> Expr:
        left = self.unary()
        while True:
            tok = self.s.current
            if tok.kind != OP or tok.value not in _PREC:
                return left
            prec = _PREC[tok.value]
            if prec < min_prec:
                return left
            self.s.advance()
            if tok.value in COMPARE_OPS:
                right = self.parse(prec + 1)
                left = Binary(tok.value, left, right)
                nxt = self.s.current
                if nxt.kind == OP and nxt.value in COMPARE_OPS:
                    self.s.error("chained comparison needs parentheses")
            else:
                right = self.parse(prec + 1)
                left = Binary(tok.value, left, right)

    def unary(self) -> Expr:
        if self.s.at("-") or self.s.at("!"):
            op = self.s.advance().value
            operand = self.unary()
            nxt = self.s.current
            if (op == "!" and isinstance(operand, (Param, Const)) and nxt.kind == OP
                    and nxt.value in COMPARE_OPS):
                # '!' binds tighter than comparisons, so this would negate the bare operand
                name = to_text(operand)
                self.s.error(f"'!{name} {nxt.value} ...' negates {name} alone; "
                             f"write !({name}{nxt.value}...) or use '!='")
            return Unary(op, operand)
        return self.primary()

    def primary(self) -> Expr:
        if self.primary_hook is not None:
            node = self.primary_hook(self)
            if node is not None:
                return node
        tok = self.s.current
        if tok.kind == NUM:
            self.s.advance()
            return Const(Fraction(tok.value))
        if tok.kind == NAME:
            if tok.value in ("true", "false"):
                self.s.advance()
                return BoolLit(tok.value == "true")
            self.s.advance()
            return Param(tok.value)
        if self.s.accept("("):
            inner = self.parse()
            self.s.expect(")")
            return inner
        self.s.error(f"unexpected {tok.describe()}",
                     ["number", "identifier", "'('", "'-'", "'!'"])


def parse_expr(text: str) -> Expr:
    """Parse *text* as a complete expression.

    >>> parse_expr("1-pRetry")
    Binary(op='-', left=Const(value=Fraction(1, 1)), right=Param(name='pRetry'))
    """
    stream = TokenStream(text)
    e = ExprParser(stream).parse()
    if stream.current.kind != EOF:
        stream.error(f"unexpected {stream.current.describe()}", ["operator", EOF])
    return e


# -------------------------------------------------------------------- printing

def _fraction_text(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{q.numerator}/{q.denominator}"
    k = max(twos, fives)
    scaled = abs(q.numerator) * 10 ** k // q.denominator
    digits = str(scaled).rjust(k + 1, "0")
    text = digits[:-k] + "." + digits[-k:]
    return ("-" if q < 0 else "") + text


def _prec(e) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return _UNARY_PREC
    if isinstance(e, Const):
        txt = _fraction_text(e.value)
        if e.value < 0 or "/" in txt:
            return 0  # always parenthesise
    return _ATOM_PREC


def _bare_not(e):
    return isinstance(e, Unary) and e.op == "!" and isinstance(e.operand, (Param, Var, Const))


def to_text(e) -> str:
    """Render with the minimum parentheses needed to reparse the same tree."""
    if isinstance(e, Const):
        return _fraction_text(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, (Param, Var)):
        return e.name
    if isinstance(e, Unary):
        inner = to_text(e.operand)
        if _prec(e.operand) < _ATOM_PREC:
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        lt, rt = to_text(e.left), to_text(e.right)
        lp, rp = _prec(e.left), _prec(e.right)
        if lp < p or (e.op in COMPARE_OPS and (lp <= p or _bare_not(e.left))):
            lt = f"({lt})"
        if rp <= p:
            rt = f"({rt})"
        sep = "" if e.op in ARITH_OPS[2:] else " "
        return f"{lt}{sep}{e.op}{sep}{rt}"
    text = getattr(e, "to_text", None)
    if text is not None:
        return text()
    raise TypeError(f"not an expression: {e!r}")


# ------------------------------------------------------------------ evaluation

def _arith(op, a, b):
    if op == "+":
        return Fraction(a) + b
    if op == "-":
        return Fraction(a) - b
    if op == "*":
        return Fraction(a) * b
    if b == 0:
        raise EvalError("division by zero")
    return Fraction(a) / b


def _compare(op, a, b):
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
    return a >= b


def eval_expr(e: Expr, b: Binding):
    """Evaluate exactly.  Arithmetic yields ``Fraction``; comparisons ``bool``."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, (Param, Var)):
        try:
            return b[e.name]
        except KeyError:
            raise UnboundParameterError(e.name) from None
    if isinstance(e, Unary):
        v = eval_expr(e.operand, b)
        return (not v) if e.op == "!" else -Fraction(v)
    if isinstance(e, Binary):
        op = e.op
        if op == "&":
            return bool(eval_expr(e.left, b)) and bool(eval_expr(e.right, b))
        if op == "|":
            return bool(eval_expr(e.left, b)) or bool(eval_expr(e.right, b))
        lv = eval_expr(e.left, b)
        rv = eval_expr(e.right, b)
        if op in COMPARE_OPS:
            return _compare(op, lv, rv)
        return _arith(op, lv, rv)
    raise EvalError(f"cannot evaluate {type(e).__name__} node")


def compile_expr(e: Expr) -> Callable[[Mapping], object]:
    """Return a closure equivalent to ``lambda env: eval_expr(e, env)``."""
    if isinstance(e, (Const, BoolLit)):
        v = e.value
        return lambda env: v
    if isinstance(e, (Param, Var)):
        name = e.name

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundParameterError(name) from None
        return lookup
    if isinstance(e, Unary):
        f = compile_expr(e.operand)
        if e.op == "!":
            return lambda env: not f(env)
        return lambda env: -Fraction(f(env))
    if isinstance(e, Binary):
        f, g, op = compile_expr(e.left), compile_expr(e.right), e.op
        if op == "&":
            return lambda env: bool(f(env)) and bool(g(env))
        if op == "|":
            return lambda env: bool(f(env)) or bool(g(env))
        if op == "=":
            return lambda env: f(env) == g(env)
        if op == "!=":
            return lambda env: f(env) != g(env)
        if op in COMPARE_OPS:
            return lambda env: _compare(op, f(env), g(env))
        return lambda env: _arith(op, f(env), g(env))
    raise EvalError(f"cannot compile {type(e).__name__} node")


# ------------------------------------------------------------- tree utilities

def children(e):
    if isinstance(e, Unary):
        return (e.operand,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    sub = getattr(e, "children", None)
    return sub() if callable(sub) else ()


def walk(e):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(children(node))


def free_params(e: Expr) -> set:
    """Names of all parameter references in the tree (state variables excluded)."""
    return {n.name for n in walk(e) if isinstance(n, Param)}


def variables(e: Expr) -> set:
    return {n.name for n in walk(e) if isinstance(n, Var)}


def is_constant(e: Expr) -> bool:
    return all(not isinstance(n, (Param, Var)) for n in walk(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace parameter (and variable) references by expressions.

    Names absent from *mapping* are kept.
    """
    if isinstance(e, (Param, Var)):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        inner = substitute(e.operand, mapping)
        return e if inner is e.operand else Unary(e.op, inner)
    if isinstance(e, Binary):
        left = substitute(e.left, mapping)
        right = substitute(e.right, mapping)
        if left is e.left and right is e.right:
            return e
        return Binary(e.op, left, right)
    return e


def bind(e: Expr, binding: Binding) -> Expr:
    """Substitute values for the bound parameters and fold constants."""
    mapping = {k: (BoolLit(v) if isinstance(v, bool) else Const(Fraction(v)))
               for k, v in binding.items()}
    return fold(substitute(e, mapping))


def resolve_vars(e: Expr, names) -> Expr:
    """Turn parameter references whose name is in *names* into :class:`Var`."""
    if isinstance(e, Param):
        return Var(e.name) if e.name in names else e
    if isinstance(e, Unary):
        return Unary(e.op, resolve_vars(e.operand, names))
    if isinstance(e, Binary):
        return Binary(e.op, resolve_vars(e.left, names), resolve_vars(e.right, names))
    return e


def fold(e: Expr) -> Expr:
    """Evaluate every constant subtree; subtrees that fail to evaluate are kept."""
    if isinstance(e, Unary):
        inner = fold(e.operand)
        node = Unary(e.op, inner)
        if isinstance(inner, (Const, BoolLit)):
            return _literal(eval_expr(node, {}))
        return node
    if isinstance(e, Binary):
        left, right = fold(e.left), fold(e.right)
        node = Binary(e.op, left, right)
        if isinstance(left, (Const, BoolLit)) and isinstance(right, (Const, BoolLit)):
            try:
                return _literal(eval_expr(node, {}))
            except EvalError:
                return node
        return node
    return e


def _literal(v) -> Expr:
    if isinstance(v, bool):
        return BoolLit(v)
    return Const(Fraction(v))
