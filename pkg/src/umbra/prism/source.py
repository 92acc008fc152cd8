"""PRISM-language subset: abstract syntax and parser."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from ..errors import ModelError, ParseError
from ..expr import (BoolLit, Const, Expr, ExprParser, Param, eval_expr,
                    free_params, resolve_vars, substitute, variables, walk)
from ..lexer import EOF, NAME, OP, STRING, TokenStream

MODEL_KINDS = ("dtmc", "ctmc", "mdp", "pomdp")
_KIND_ALIASES = {
    "dtmc": "dtmc", "probabilistic": "dtmc",
    "ctmc": "ctmc", "stochastic": "ctmc",
    "mdp": "mdp", "nondeterministic": "mdp",
    "pomdp": "pomdp",
}
_GAME_KEYWORDS = ("smg", "csg", "player", "tsg")
_EXTENSIONS = {".dtmc": "dtmc", ".pm": "dtmc", ".ctmc": "ctmc", ".sm": "ctmc",
               ".mdp": "mdp", ".nm": "mdp", ".pomdp": "pomdp"}


@dataclass(frozen=True)
class VarDecl:
    name: str
    low: Expr
    high: Expr
    init: Expr | None
    is_bool: bool = False
    offset: int = 0


@dataclass(frozen=True)
class Update:
    weight: Expr
    assignments: tuple  # ((variable, Expr), ...)


@dataclass(frozen=True)
class Command:
    action: str | None
    guard: Expr
    updates: tuple
    module: str
    index: int  # position within the module, used in diagnostics
    offset: int = 0

    def describe(self):
        label = self.action or ""
        return f"module {self.module}, command {self.index + 1} [{label}]"


@dataclass(frozen=True)
class Module:
    name: str
    variables: tuple
    commands: tuple

    def actions(self):
        return {c.action for c in self.commands if c.action is not None}


@dataclass(frozen=True)
class RewardStruct:
    name: str | None
    state_items: tuple  # ((guard, value), ...)
    transition_items: tuple  # ((action, guard, value), ...)


@dataclass(frozen=True)
class SourceModel:
    kind: str
    constants: dict  # name -> Expr or None (unbound parameter)
    modules: tuple
    labels: dict  # name -> Expr
    rewards: tuple
    observables: tuple | None = None
    formulas: dict = field(default_factory=dict)

    @property
    def variable_names(self):
        return tuple(v.name for m in self.modules for v in m.variables)

    def variable(self, name):
        for m in self.modules:
            for v in m.variables:
                if v.name == name:
                    return v
        raise KeyError(name)

    def reward_struct(self, name):
        if name is None:
            if not self.rewards:
                raise ModelError("model has no reward structure")
            return self.rewards[0]
        if isinstance(name, int):
            return self.rewards[name]
        for r in self.rewards:
            if r.name == name:
                return r
        raise ModelError(f"no reward structure named '{name}'")

    def all_expressions(self):
        """Yield (context, Expr) for every expression in the model."""
        for m in self.modules:
            for v in m.variables:
                yield f"range of {v.name}", v.low
                yield f"range of {v.name}", v.high
                if v.init is not None:
                    yield f"initial value of {v.name}", v.init
            for c in m.commands:
                yield f"guard of {c.describe()}", c.guard
                for u in c.updates:
                    yield f"weight in {c.describe()}", u.weight
                    for var, e in u.assignments:
                        yield f"update of {var} in {c.describe()}", e
        for name, e in self.labels.items():
            yield f"label \"{name}\"", e
        for r in self.rewards:
            for g, v in r.state_items:
                yield f"reward guard in {r.name}", g
                yield f"reward value in {r.name}", v
            for _, g, v in r.transition_items:
                yield f"reward guard in {r.name}", g
                yield f"reward value in {r.name}", v

    def structural_parameters(self):
        """Parameters that influence guards, ranges, initial values or updates."""
        names = set()
        for ctx, e in self.all_expressions():
            if ctx.startswith(("guard", "range", "initial", "update", "label",
                               "reward guard")):
                names |= free_params(e)
        return names & set(list_parameters(self))

    def with_constants(self, values):
        """Copy with constants defined (or redefined) to the given values."""
        consts = dict(self.constants)
        for k, v in values.items():
            if k not in consts:
                raise ModelError(f"model has no constant '{k}'")
            consts[k] = v if isinstance(v, Expr) else _literal(v)
        return SourceModel(self.kind, consts, self.modules, self.labels,
                           self.rewards, self.observables, self.formulas)


def _literal(v):
    if isinstance(v, bool):
        return BoolLit(v)
    return Const(Fraction(v) if not isinstance(v, float) else Fraction(str(v)))


def list_parameters(m: SourceModel) -> set:
    """Names of the constants declared without a value."""
    return {k for k, v in m.constants.items() if v is None}


def kind_from_path(path) -> str | None:
    return _EXTENSIONS.get(Path(path).suffix.lower())


# ---------------------------------------------------------------------- parser

class _ModelParser:
    def __init__(self, text):
        self.text = text
        self.s = TokenStream(text)
        self.ep = ExprParser(self.s)

    def expr(self):
        return self.ep.parse()

    def name(self):
        return self.s.expect_kind(NAME).value

    def parse(self, kind=None):
        s = self.s
        header = None
        if s.at_kind(NAME) and s.current.value in _KIND_ALIASES:
            header = _KIND_ALIASES[s.advance().value]
        elif s.at_kind(NAME) and s.current.value in _GAME_KEYWORDS:
            raise ModelError("stochastic games unsupported")
        if header and kind and header != kind:
            raise ModelError(f"model header says {header} but {kind} was requested")
        kind = header or kind
        if kind is None:
            s.error("missing model type", list(MODEL_KINDS))

        constants, formulas, labels = {}, {}, {}
        modules, rewards = [], []
        observables = None
        seen_names = {}

        def declare(name, what, offset):
            if name in seen_names:
                raise ParseError(f"duplicate {what} '{name}' (already a {seen_names[name]})",
                                 offset, text=self.text)
            seen_names[name] = what

        while not s.at_kind(EOF):
            tok = s.current
            if tok.kind != NAME:
                s.error(f"unexpected {tok.describe()}",
                        ["const", "formula", "module", "label", "rewards", "observables"])
            kw = tok.value
            if kw == "const":
                s.advance()
                if s.at_kind(NAME) and s.current.value in ("int", "double", "bool") \
                        and s.peek().kind == NAME:
                    s.advance()
                off = s.current.offset
                cname = self.name()
                declare(cname, "constant", off)
                value = None
                if s.accept("="):
                    value = self.expr()
                s.expect(";")
                constants[cname] = value
            elif kw == "formula":
                s.advance()
                off = s.current.offset
                fname = self.name()
                declare(fname, "formula", off)
                s.expect("=")
                formulas[fname] = self.expr()
                s.expect(";")
            elif kw == "global":
                s.error("global variables are not supported")
            elif kw in _GAME_KEYWORDS:
                raise ModelError("stochastic games unsupported")
            elif kw == "module":
                modules.append(self.module(declare))
            elif kw == "label":
                s.advance()
                off = s.current.offset
                lname = s.expect_kind(STRING).value
                if lname in labels:
                    raise ParseError(f"duplicate label '{lname}'", off, text=self.text)
                s.expect("=")
                labels[lname] = self.expr()
                s.expect(";")
            elif kw == "rewards":
                rewards.append(self.rewards())
            elif kw == "observables":
                s.advance()
                names = [self.name()]
                while not s.at("endobservables"):
                    s.accept(",")
                    names.append(self.name())
                s.expect("endobservables")
                observables = (observables or ()) + tuple(names)
            elif kw in ("init", "system"):
                s.error(f"'{kw}' blocks are not supported")
            else:
                s.error(f"unexpected {tok.describe()}",
                        ["const", "formula", "module", "label", "rewards", "observables"])

        if observables is not None and kind != "pomdp":
            raise ModelError("observables are only allowed in pomdp models")
        if kind == "pomdp" and observables is None:
            raise ModelError("pomdp model declares no observables")
        model = SourceModel(kind, constants, tuple(modules), labels, tuple(rewards),
                            observables, formulas)
        return _normalise(model)

    def module(self, declare):
        s = self.s
        s.expect("module")
        mname = self.name()
        variables, commands = [], []
        while not s.at("endmodule"):
            if s.at("["):
                commands.append(self.command(mname, len(commands)))
            elif s.at_kind(NAME) and s.peek().value == ":":
                off = s.current.offset
                vname = self.name()
                declare(vname, "variable", off)
                s.expect(":")
                if s.accept("bool"):
                    low, high, is_bool = Const(Fraction(0)), Const(Fraction(1)), True
                else:
                    s.expect("[")
                    low = self.expr()
                    s.expect("..")
                    high = self.expr()
                    s.expect("]")
                    is_bool = False
                init = None
                if s.accept("init"):
                    init = self.expr()
                s.expect(";")
                variables.append(VarDecl(vname, low, high, init, is_bool, off))
            else:
                s.error(f"unexpected {s.current.describe()}",
                        ["'['", "variable declaration", "'endmodule'"])
        s.expect("endmodule")
        return Module(mname, tuple(variables), tuple(commands))

    def command(self, mname, index):
        s = self.s
        off = s.current.offset
        s.expect("[")
        action = None
        if s.at_kind(NAME):
            action = self.name()
        s.expect("]")
        guard = self.expr()
        s.expect("->")
        updates = [self.update()]
        while s.accept("+"):
            updates.append(self.update())
        s.expect(";")
        return Command(action, guard, tuple(updates), mname, index, off)

    def _at_assignment(self):
        s = self.s
        if s.at("(") and s.peek().kind == NAME and s.peek(2).value == "'":
            return True
        return s.at("true") and s.peek().kind == OP and s.peek().value in (";", "+")

    def update(self):
        s = self.s
        if self._at_assignment():
            weight = Const(Fraction(1))
        else:
            weight = self.expr()
            s.expect(":")
        if s.accept("true"):
            return Update(weight, ())
        assigns = [self.assignment()]
        while s.accept("&"):
            assigns.append(self.assignment())
        names = [a for a, _ in assigns]
        if len(set(names)) != len(names):
            s.error("variable assigned twice in one update")
        return Update(weight, tuple(assigns))

    def assignment(self):
        s = self.s
        s.expect("(")
        var = self.name()
        s.expect("'")
        s.expect("=")
        value = self.expr()
        s.expect(")")
        return var, value

    def rewards(self):
        s = self.s
        s.expect("rewards")
        name = None
        if s.at_kind(STRING):
            name = s.advance().value
        state_items, trans_items = [], []
        while not s.at("endrewards"):
            if s.accept("["):
                action = self.name() if s.at_kind(NAME) else None
                s.expect("]")
                guard = self.expr()
                s.expect(":")
                value = self.expr()
                s.expect(";")
                trans_items.append((action, guard, value))
            else:
                guard = self.expr()
                s.expect(":")
                value = self.expr()
                s.expect(";")
                state_items.append((guard, value))
        s.expect("endrewards")
        return RewardStruct(name, tuple(state_items), tuple(trans_items))


def _expand_formulas(e, formulas, depth=0):
    if depth > 100:
        raise ModelError("cyclic formula definitions")
    if not any(isinstance(n, Param) and n.name in formulas for n in walk(e)):
        return e
    return _expand_formulas(substitute(e, formulas), formulas, depth + 1)


def _normalise(m: SourceModel) -> SourceModel:
    """Expand formulas, mark variable references, check names and ranges."""
    varnames = set(m.variable_names)
    known = varnames | set(m.constants) | set(m.formulas)
    formulas = {k: _expand_formulas(v, m.formulas) for k, v in m.formulas.items()}

    def fix(e, ctx):
        e = _expand_formulas(e, formulas)
        unknown = free_params(e) - known
        if unknown:
            raise ModelError(f"unknown identifier(s) {sorted(unknown)} in {ctx}")
        return resolve_vars(e, varnames)

    constants = {}
    for k, v in m.constants.items():
        if v is not None:
            v = fix(v, f"constant {k}")
            if variables(v) or free_params(v) - set(m.constants):
                raise ModelError(f"constant {k} refers to a state variable or formula")
        constants[k] = v

    modules = []
    for mod in m.modules:
        decls = []
        for v in mod.variables:
            low, high = fix(v.low, f"range of {v.name}"), fix(v.high, f"range of {v.name}")
            init = fix(v.init, f"initial value of {v.name}") if v.init is not None else None
            decls.append(VarDecl(v.name, low, high, init, v.is_bool, v.offset))
        local = {v.name for v in decls}
        commands = []
        for c in mod.commands:
            guard = fix(c.guard, f"guard of {c.describe()}")
            updates = []
            for u in c.updates:
                assigns = []
                for var, e in u.assignments:
                    if var not in varnames:
                        raise ModelError(f"update of undeclared variable '{var}' in {c.describe()}")
                    if var not in local:
                        raise ModelError(f"module {mod.name} updates variable '{var}' "
                                         f"owned by another module")
                    assigns.append((var, fix(e, f"update in {c.describe()}")))
                updates.append(Update(fix(u.weight, f"weight in {c.describe()}"), tuple(assigns)))
            commands.append(Command(c.action, guard, tuple(updates), c.module, c.index, c.offset))
        modules.append(Module(mod.name, tuple(decls), tuple(commands)))

    labels = {k: fix(v, f"label \"{k}\"") for k, v in m.labels.items()}
    rewards = []
    for r in m.rewards:
        rewards.append(RewardStruct(
            r.name,
            tuple((fix(g, "reward guard"), fix(v, "reward value")) for g, v in r.state_items),
            tuple((a, fix(g, "reward guard"), fix(v, "reward value"))
                  for a, g, v in r.transition_items)))
    if m.observables is not None:
        for name in m.observables:
            if name not in varnames:
                raise ModelError(f"observable '{name}' is not a declared variable")

    out = SourceModel(m.kind, constants, tuple(modules), labels, tuple(rewards),
                      m.observables, formulas)
    _check_initial_values(out)
    return out


def constant_values(m: SourceModel, binding=None) -> dict:
    """Exact values of all constants computable from definitions and *binding*."""
    values = {}
    binding = dict(binding or {})
    pending = dict(m.constants)
    for k, v in binding.items():
        if k in pending:
            values[k] = v
            pending.pop(k)
    progress = True
    while pending and progress:
        progress = False
        for k, e in list(pending.items()):
            if e is None:
                pending.pop(k)
                continue
            if free_params(e) <= set(values):
                values[k] = eval_expr(e, values)
                pending.pop(k)
                progress = True
    return values


def _check_initial_values(m: SourceModel):
    consts = constant_values(m)
    for mod in m.modules:
        for v in mod.variables:
            exprs = [v.low, v.high] + ([v.init] if v.init is not None else [])
            if not all(free_params(e) <= set(consts) and not variables(e) for e in exprs):
                continue
            low, high = eval_expr(v.low, consts), eval_expr(v.high, consts)
            if low > high:
                raise ModelError(f"empty range for variable {v.name}")
            if v.init is not None:
                init = eval_expr(v.init, consts)
                if not low <= init <= high:
                    raise ModelError(f"initial value {init} of {v.name} outside [{low}..{high}]")


def parse_model(text: str, kind: str | None = None) -> SourceModel:
    """Parse PRISM-subset model text.

    ``kind`` supplies the model type when the text has no header (for instance
    when it was inferred from the file extension).
    """
    return _ModelParser(text).parse(kind)


def load_model(path, kind: str | None = None) -> SourceModel:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_model(text, kind or kind_from_path(path))
