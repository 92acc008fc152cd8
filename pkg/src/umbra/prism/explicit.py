"""Explicit-state compilation of PRISM-subset models.

Reachable states are discovered breadth-first from the initial valuation.
Commands are visited in a fixed order (unlabelled commands by module and
position, then synchronised actions alphabetically), so identical input always
yields identical state indexing.

Weights stay exact: a transition weight is a ``Fraction`` once all parameters
it mentions are bound, and an :class:`~umbra.expr.Expr` otherwise.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ..errors import ModelError, ProbabilityError, StateSpaceError
from ..expr import (Binary, BoolLit, Const, Expr, bind, compile_expr, eval_expr,
                    fold, free_params, substitute)
from .source import SourceModel, constant_values, list_parameters

DEFAULT_MAX_STATES = 10 ** 7


class Transition(NamedTuple):
    weight: object  # Fraction or Expr
    target: int
    action: str | None


class Choice(NamedTuple):
    action: str | None
    transitions: tuple
    origin: str  # command description, for diagnostics


def _is_num(w):
    return isinstance(w, Fraction)


def _to_value(e):
    """Collapse a folded constant expression to a Fraction; keep symbolic ones."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, BoolLit):
        return Fraction(int(e.value))
    return e


def _mul(a, b):
    if _is_num(a) and _is_num(b):
        return a * b
    if _is_num(a) and a == 1:
        return b
    if _is_num(b) and b == 1:
        return a
    return Binary("*", a if isinstance(a, Expr) else Const(a),
                  b if isinstance(b, Expr) else Const(b))


def _add(a, b):
    if _is_num(a) and _is_num(b):
        return a + b
    return Binary("+", a if isinstance(a, Expr) else Const(a),
                  b if isinstance(b, Expr) else Const(b))


@dataclass
class RewardStructure:
    name: str | None
    state: list  # per state: Fraction or Expr
    transition: dict  # (state, action) -> Fraction or Expr


@dataclass
class ExplicitModel:
    kind: str
    variables: tuple
    states: list
    initial: int
    choices: list  # per state: tuple of Choice
    labels: dict  # name -> np.ndarray[bool]
    rewards: list  # RewardStructure
    constants: dict  # values of all bound constants
    parameters: frozenset  # parameters still symbolic
    observations: list | None = None  # per state: observation class index
    observation_values: list | None = None  # per class: tuple of observable values
    observables: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self):
        return len(self.states)

    def is_bound(self):
        return not self.parameters

    def var_values(self, name):
        key = ("var", name)
        if key not in self._cache:
            i = self.variables.index(name)
            self._cache[key] = np.array([s[i] for s in self.states], dtype=np.int64)
        return self._cache[key]

    def valuation(self, s):
        return dict(zip(self.variables, self.states[s]))

    def describe_state(self, s):
        return "(" + ",".join(f"{k}={v}" for k, v in zip(self.variables, self.states[s])) + ")"

    def reward_structure(self, name=None):
        if not self.rewards:
            raise ModelError("model has no reward structures")
        if name is None:
            return self.rewards[0]
        for r in self.rewards:
            if r.name == name:
                return r
        raise ModelError(f"no reward structure named '{name}'")

    def actions(self, s):
        return tuple(c.action for c in self.choices[s])

    # ------------------------------------------------------------- numerics

    def _require_bound(self):
        if self.parameters:
            raise ModelError(f"model has unbound parameters {sorted(self.parameters)}")

    def choice_matrix(self):
        """Sparse matrix with one row per choice, plus row-group offsets.

        Row ``offsets[s] + k`` holds the k-th choice of state ``s``.  Weights
        are probabilities (discrete models) or rates (ctmc).
        """
        if "choice_matrix" not in self._cache:
            self._require_bound()
            rows, cols, vals = [], [], []
            offsets = [0]
            r = 0
            for s in range(self.n):
                for ch in self.choices[s]:
                    for t in ch.transitions:
                        rows.append(r)
                        cols.append(t.target)
                        vals.append(float(t.weight))
                    r += 1
                offsets.append(r)
            mat = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.n))
            mat.sum_duplicates()
            self._cache["choice_matrix"] = (mat, np.array(offsets, dtype=np.int64))
        return self._cache["choice_matrix"]

    def matrix(self):
        """Transition probability (dtmc) or rate (ctmc) matrix, n x n."""
        if self.kind not in ("dtmc", "ctmc"):
            raise ModelError(f"{self.kind} has no single transition matrix")
        return self.choice_matrix()[0]

    def state_rewards(self, name=None):
        r = self.reward_structure(name)
        self._require_bound()
        return np.array([float(v) for v in r.state], dtype=float)

    def choice_rewards(self, name=None):
        """Per choice row: state reward plus expected transition reward.

        For a ctmc the transition part is a reward rate, sum(rate * impulse).
        """
        key = ("choice_rewards", name)
        if key not in self._cache:
            r = self.reward_structure(name)
            self._require_bound()
            out = []
            for s in range(self.n):
                rho = float(r.state[s])
                for ch in self.choices[s]:
                    extra = 0.0
                    if r.transition:
                        for t in ch.transitions:
                            iota = r.transition.get((s, t.action))
                            if iota is not None:
                                extra += float(t.weight) * float(iota)
                    out.append(rho + extra)
            self._cache[key] = np.array(out, dtype=float)
        return self._cache[key]

    def has_transition_rewards(self, name=None):
        return bool(self.reward_structure(name).transition)

    # --------------------------------------------------------------- binding

    def substitute(self, binding):
        """Instantiate symbolic weights and rewards with parameter values."""
        binding = {k: Fraction(v) if not isinstance(v, Fraction) else v
                   for k, v in binding.items()}

        def inst(w):
            if _is_num(w):
                return w
            return _to_value(bind(w, binding))

        choices = []
        for s in range(self.n):
            row = []
            for ch in self.choices[s]:
                trans = tuple(Transition(inst(t.weight), t.target, t.action)
                              for t in ch.transitions)
                trans = tuple(t for t in trans if not (_is_num(t.weight) and t.weight == 0))
                ch2 = Choice(ch.action, trans, ch.origin)
                _check_choice(self.kind, ch2, self, s)
                row.append(ch2)
            choices.append(tuple(row))
        rewards = [RewardStructure(r.name, [inst(v) for v in r.state],
                                   {k: inst(v) for k, v in r.transition.items()})
                   for r in self.rewards]
        remaining = set()
        for row in choices:
            for ch in row:
                for t in ch.transitions:
                    if not _is_num(t.weight):
                        remaining |= free_params(t.weight)
        for r in rewards:
            for v in itertools.chain(r.state, r.transition.values()):
                if not _is_num(v):
                    remaining |= free_params(v)
        consts = dict(self.constants)
        consts.update(binding)
        return ExplicitModel(self.kind, self.variables, self.states, self.initial,
                             choices, self.labels, rewards, consts, frozenset(remaining),
                             self.observations, self.observation_values, self.observables)

    def symbolic_weights(self):
        """Yield every weight/reward that is still an expression."""
        for row in self.choices:
            for ch in row:
                for t in ch.transitions:
                    if not _is_num(t.weight):
                        yield t.weight
        for r in self.rewards:
            for v in itertools.chain(r.state, r.transition.values()):
                if not _is_num(v):
                    yield v


def _check_choice(kind, ch, model_or_states, s):
    weights = [t.weight for t in ch.transitions]
    where = lambda: f"state {_state_text(model_or_states, s)} ({ch.origin})"  # noqa: E731
    for w in weights:
        if _is_num(w) and w < 0:
            what = "rate" if kind == "ctmc" else "probability"
            raise ProbabilityError(f"negative {what} {w} in {where()}")
    if kind == "ctmc":
        return
    if all(_is_num(w) for w in weights):
        total = sum(weights, Fraction(0))
        if total != 1:
            raise ProbabilityError(f"probabilities sum to {total} instead of 1 in {where()}")


def _state_text(model_or_states, s):
    if isinstance(model_or_states, ExplicitModel):
        return model_or_states.describe_state(s)
    names, states = model_or_states
    return "(" + ",".join(f"{k}={v}" for k, v in zip(names, states[s])) + ")"


# ------------------------------------------------------------------ building

class _CompiledCommand:
    __slots__ = ("cmd", "guard", "updates")

    def __init__(self, cmd, guard, updates):
        self.cmd = cmd
        self.guard = guard
        self.updates = updates  # [(weight_fn or None, weight_expr, [(var_index, fn)])]


def _structural_check(m, mapping, unbound):
    for ctx, e in m.all_expressions():
        if ctx.startswith(("weight", "reward value")):
            continue
        missing = free_params(substitute(e, mapping)) & unbound
        if missing:
            raise ModelError(f"parameter(s) {sorted(missing)} must be bound: they appear in {ctx}")


def build_state_space(m: SourceModel, bound=None, max_states: int = DEFAULT_MAX_STATES):
    """Compile *m* to an :class:`ExplicitModel` over its reachable states.

    ``bound`` maps parameter (or constant) names to values; parameters left
    out stay symbolic in transition weights and rewards.
    """
    bound = {k: (v if isinstance(v, (Fraction, bool)) else Fraction(str(v)) if isinstance(v, float)
                 else Fraction(v)) for k, v in (bound or {}).items()}
    unknown = set(bound) - set(m.constants)
    if unknown:
        raise ModelError(f"binding names unknown constant(s) {sorted(unknown)}")
    consts = constant_values(m, bound)
    unbound = frozenset(list_parameters(m) - set(bound))
    mapping = {k: (BoolLit(v) if isinstance(v, bool) else Const(Fraction(v)))
               for k, v in consts.items()}

    def sub(e):
        return fold(substitute(e, mapping))

    _structural_check(m, mapping, unbound)

    varnames = m.variable_names
    var_index = {v: i for i, v in enumerate(varnames)}
    lows, highs, init = [], [], []
    for mod in m.modules:
        for v in mod.variables:
            lo = eval_expr(sub(v.low), {})
            hi = eval_expr(sub(v.high), {})
            if lo != int(lo) or hi != int(hi):
                raise ModelError(f"range of {v.name} is not integral")
            lo, hi = int(lo), int(hi)
            if lo > hi:
                raise ModelError(f"empty range for variable {v.name}")
            iv = int(eval_expr(sub(v.init), {})) if v.init is not None else lo
            if not lo <= iv <= hi:
                raise ModelError(f"initial value {iv} of {v.name} outside [{lo}..{hi}]")
            lows.append(lo)
            highs.append(hi)
            init.append(iv)

    def compile_command(c):
        updates = []
        for u in c.updates:
            w = sub(u.weight)
            wfn = None if free_params(w) else compile_expr(w)
            assigns = [(var_index[var], compile_expr(sub(e))) for var, e in u.assignments]
            updates.append((wfn, w, assigns))
        return _CompiledCommand(c, compile_expr(sub(c.guard)), updates)

    modules = []
    for mod in m.modules:
        unl = [compile_command(c) for c in mod.commands if c.action is None]
        by_action = {}
        for c in mod.commands:
            if c.action is not None:
                by_action.setdefault(c.action, []).append(compile_command(c))
        modules.append((mod, unl, by_action))
    all_actions = sorted({a for _, _, ba in modules for a in ba})

    states = [tuple(init)]
    index = {states[0]: 0}
    queue = deque([0])
    raw_choices = {}

    def target_of(state, env, assigns, desc):
        new = list(state)
        for vi, fn in assigns:
            val = fn(env)
            if isinstance(val, bool):
                val = int(val)
            if val != int(val):
                raise ModelError(f"non-integer value {val} assigned to {varnames[vi]} in {desc}")
            val = int(val)
            if not lows[vi] <= val <= highs[vi]:
                raise ModelError(f"value {val} of {varnames[vi]} out of range "
                                 f"[{lows[vi]}..{highs[vi]}] in {desc}")
            new[vi] = val
        return tuple(new)

    def weight_of(wfn, w, env):
        if wfn is not None:
            v = wfn(env)
            return Fraction(int(v)) if isinstance(v, bool) else Fraction(v)
        return _to_value(bind(w, env))

    def expand(cmds, env):
        """Product distribution of a tuple of commands executed together."""
        parts = []
        for cc in cmds:
            parts.append([(weight_of(wfn, w, env), assigns) for wfn, w, assigns in cc.updates])
        for combo in itertools.product(*parts):
            weight = Fraction(1)
            assigns = []
            for wt, a in combo:
                weight = _mul(weight, wt)
                assigns.extend(a)
            yield weight, assigns

    while queue:
        si = queue.popleft()
        state = states[si]
        env = dict(zip(varnames, state))
        found = []  # (action, [cmds])
        for mod, unl, _ in modules:
            for cc in unl:
                if cc.guard(env):
                    found.append((None, (cc,)))
        for a in all_actions:
            per_module = []
            for mod, _, ba in modules:
                if a in ba:
                    enabled = [cc for cc in ba[a] if cc.guard(env)]
                    if not enabled:
                        per_module = None
                        break
                    per_module.append(enabled)
            if per_module:
                for combo in itertools.product(*per_module):
                    found.append((a, combo))

        row = []
        for action, cmds in found:
            desc = " & ".join(cc.cmd.describe() for cc in cmds)
            trans = {}
            for weight, assigns in expand(cmds, env):
                if _is_num(weight) and weight == 0:
                    continue
                tgt = target_of(state, env, assigns, desc)
                ti = index.get(tgt)
                if ti is None:
                    ti = len(states)
                    if ti >= max_states:
                        raise StateSpaceError(f"state space exceeds {max_states} states")
                    states.append(tgt)
                    index[tgt] = ti
                    queue.append(ti)
                trans[ti] = _add(trans[ti], weight) if ti in trans else weight
            ch = Choice(action, tuple(Transition(w, t, action) for t, w in trans.items()), desc)
            _check_choice(m.kind, ch, (varnames, states), si)
            row.append(ch)
        raw_choices[si] = row

    n = len(states)
    choices = []
    deadlocks = np.zeros(n, dtype=bool)
    for si in range(n):
        row = raw_choices[si]
        if m.kind == "ctmc":
            merged = {}
            for ch in row:
                for t in ch.transitions:
                    key = (t.target, t.action)
                    merged[key] = _add(merged[key], t.weight) if key in merged else t.weight
            if not row:
                deadlocks[si] = True
            origin = " + ".join(ch.origin for ch in row) or "absorbing"
            choices.append((Choice(None, tuple(Transition(w, t, a) for (t, a), w in merged.items()),
                                   origin),))
            continue
        if not row:
            deadlocks[si] = True
            row = [Choice(None, (Transition(Fraction(1), si, None),), "deadlock self-loop")]
        if m.kind == "dtmc" and len(row) > 1:
            raise ModelError(
                f"state {_state_text((varnames, states), si)} of a dtmc enables "
                f"{len(row)} commands: {'; '.join(ch.origin for ch in row)}")
        choices.append(tuple(row))

    envs = [dict(zip(varnames, s)) for s in states]
    labels = {}
    for name, e in m.labels.items():
        fn = compile_expr(sub(e))
        labels[name] = np.array([bool(fn(env)) for env in envs], dtype=bool)
    init_lbl = np.zeros(n, dtype=bool)
    init_lbl[0] = True
    labels.setdefault("init", init_lbl)
    labels.setdefault("deadlock", deadlocks)

    rewards = []
    for r in m.rewards:
        sitems = [(compile_expr(sub(g)), sub(v)) for g, v in r.state_items]
        titems = [(a, compile_expr(sub(g)), sub(v)) for a, g, v in r.transition_items]
        state_vals = []
        trans_vals = {}
        for si, env in enumerate(envs):
            total = Fraction(0)
            for g, v in sitems:
                if g(env):
                    total = _add(total, _to_value(bind(v, env)))
            state_vals.append(total)
            for a, g, v in titems:
                if g(env):
                    key = (si, a)
                    val = _to_value(bind(v, env))
                    trans_vals[key] = _add(trans_vals[key], val) if key in trans_vals else val
        rewards.append(RewardStructure(r.name, state_vals, trans_vals))
        for v in itertools.chain(state_vals, trans_vals.values()):
            if _is_num(v) and v < 0:
                raise ModelError(f"negative reward {v} in reward structure {r.name}")

    observations = observation_values = None
    if m.kind == "pomdp":
        obs_idx = [varnames.index(o) for o in m.observables]
        observation_values, observations, lookup = [], [], {}
        action_sets = {}
        for si, s in enumerate(states):
            key = tuple(s[i] for i in obs_idx)
            if key not in lookup:
                lookup[key] = len(observation_values)
                observation_values.append(key)
            o = lookup[key]
            observations.append(o)
            acts = tuple(sorted((c.action or "" for c in choices[si])))
            if o in action_sets and action_sets[o][0] != acts:
                raise ModelError(
                    f"states {_state_text((varnames, states), action_sets[o][1])} and "
                    f"{_state_text((varnames, states), si)} share an observation but enable "
                    f"different actions")
            action_sets.setdefault(o, (acts, si))

    remaining = set()
    for row in choices:
        for ch in row:
            for t in ch.transitions:
                if not _is_num(t.weight):
                    remaining |= free_params(t.weight)
    for r in rewards:
        for v in itertools.chain(r.state, r.transition.values()):
            if not _is_num(v):
                remaining |= free_params(v)

    return ExplicitModel(m.kind, varnames, states, 0, choices, labels, rewards,
                         consts, frozenset(remaining), observations, observation_values,
                         m.observables)

