"""Multi-model stochastic systems and their recursive verification.

A :class:`WorldModel` holds the models, the dependency parameters (each the
result of a property checked on another model) and the external parameters
(estimated from observations).  :class:`Verifier` resolves parameters
component by component along the condensation of the dependency graph:
values flowing in from other components are verified recursively first, and
co-dependent parameters inside one component are solved jointly, either as
a system of closed-form equations (Newton) or by minimising the squared
fixed-point residual (Powell).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .engines import check
from .errors import (EngineError, ModelError, ParametricError, ParseError, PropertyError,
                     SolverError, UmbraError, ValidationError, VerificationError)
from .graph import DependencyGraph, compute_sccs
from .infer import InferenceSpec, infer
from .parametric.sensitivity import PropertyFunction
from .prism.explicit import DEFAULT_MAX_STATES, build_state_space
from .prism.source import SourceModel, list_parameters
from .props import is_numeric, parametric_feasible, parse_property, property_text
from .solve import (EquationSystem, Objective, default_domain, newton_solve,
                    powell_minimize)

POWELL_ACCEPT = 1e-8


@dataclass
class ModelEntry:
    id: str
    source: SourceModel
    path: str | None = None

    @property
    def kind(self):
        return self.source.kind


@dataclass
class Dependency:
    target: str
    param: str
    source: str
    text: str
    domain: tuple | None = None
    prop: object = field(default=None, compare=False)

    @property
    def key(self):
        return f"{self.target}.{self.param}"


@dataclass
class External:
    model: str
    param: str
    spec: InferenceSpec

    @property
    def key(self):
        return f"{self.model}.{self.param}"


class WorldModel:
    """The tuple (models, dependencies, external parameters)."""

    def __init__(self, models, dependencies=(), externals=(), validate=True):
        self.models = {}
        self._problems = []
        for m in models:
            if m.id in self.models:
                self._problems.append(f"duplicate model id '{m.id}'")
            self.models[m.id] = m
        self.dependencies = list(dependencies)
        self.externals = list(externals)
        if validate:
            self.validate()

    # ------------------------------------------------------------ validation

    def validate(self):
        problems = list(self._problems)
        ids = self.models
        defined = {}
        for d in self.dependencies:
            ok = True
            for role, mid in (("target", d.target), ("source", d.source)):
                if mid not in ids:
                    problems.append(f"dependency {d.param}: unknown {role} model id '{mid}'")
                    ok = False
            if not ok:
                continue
            params = list_parameters(ids[d.target].source)
            if d.param not in params:
                problems.append(f"dependency parameter '{d.param}' is not an unbound constant "
                                f"of model '{d.target}'")
            try:
                d.prop = parse_property(d.text, ids[d.source].kind)
                if not is_numeric(d.prop):
                    problems.append(f"dependency {d.key}: property {d.text} must be a =? query")
            except (ParseError, PropertyError) as exc:
                problems.append(f"dependency {d.key}: property {d.text!r}: {exc}")
            if d.param in ids[d.target].source.structural_parameters():
                problems.append(f"dependency parameter '{d.param}' of model '{d.target}' appears "
                                f"in a guard, range, update or label; only weights and rewards "
                                f"may use it")
            if d.domain is not None and not d.domain[0] <= d.domain[1]:
                problems.append(f"dependency {d.key}: empty domain {list(d.domain)}")
            if d.key in defined:
                problems.append(f"parameter {d.key} is defined twice")
            defined[d.key] = "dependency"
        for e in self.externals:
            if e.model not in ids:
                problems.append(f"external parameter {e.param}: unknown model id '{e.model}'")
                continue
            if e.param not in list_parameters(ids[e.model].source):
                problems.append(f"external parameter '{e.param}' is not an unbound constant of "
                                f"model '{e.model}'")
            if e.key in defined:
                what = defined[e.key]
                problems.append(f"parameter {e.key} is defined twice" if what == "external" else
                                f"parameter {e.key} is both a dependency and an external parameter")
            defined[e.key] = "external"
        for mid, m in ids.items():
            for p in sorted(list_parameters(m.source)):
                if f"{mid}.{p}" not in defined:
                    problems.append(f"parameter '{p}' of model '{mid}' is neither a dependency "
                                    f"nor an external parameter")
        if not problems:
            part = self.sccs()
            for d in self.dependencies:
                if part.component_of[d.source] == part.component_of[d.target]:
                    if ids[d.source].kind in ("mdp", "pomdp"):
                        problems.append(
                            f"dependency {d.key} takes its value from {ids[d.source].kind} "
                            f"'{d.source}' inside a dependency cycle; policies make the "
                            f"fixed point discontinuous, so this is not supported")
        if problems:
            raise ValidationError(problems)

    # ----------------------------------------------------------------- graph

    def graph(self) -> DependencyGraph:
        labels = {}
        for d in self.dependencies:
            labels.setdefault((d.source, d.target), []).append(d.param)
        return DependencyGraph(tuple(self.models), frozenset(labels),
                               {k: tuple(v) for k, v in labels.items()})

    def sccs(self):
        return compute_sccs(self.graph())

    # ------------------------------------------------------------- overrides

    def with_overrides(self, overrides: dict) -> "WorldModel":
        """Copy where ``name`` or ``model.name`` is pinned to a value.

        External parameters become fixed; defined constants are redefined.
        """
        models = {k: ModelEntry(m.id, m.source, m.path) for k, m in self.models.items()}
        externals = list(self.externals)
        problems = []
        for key, value in overrides.items():
            value = Fraction(value)
            mid, _, name = key.rpartition(".")
            targets = [mid] if mid else list(models)
            if mid and mid not in models:
                problems.append(f"override {key}: unknown model id '{mid}'")
                continue
            hit = False
            for t in targets:
                for i, e in enumerate(externals):
                    if e.model == t and e.param == name:
                        externals[i] = External(t, name, InferenceSpec("fixed", value=value))
                        hit = True
                src = models[t].source
                if src.constants.get(name, None) is not None:
                    models[t] = ModelEntry(t, src.with_constants({name: value}), models[t].path)
                    hit = True
                if any(d.target == t and d.param == name for d in self.dependencies):
                    problems.append(f"override {key}: '{name}' is a dependency parameter of "
                                    f"'{t}' and is computed, not set")
                    hit = True
            if not hit:
                problems.append(f"override {key}: no external parameter or constant of that name")
        if problems:
            raise ValidationError(problems)
        deps = [Dependency(d.target, d.param, d.source, d.text, d.domain) for d in self.dependencies]
        return WorldModel(list(models.values()), deps, externals)


# -------------------------------------------------------------------- verify

def _fingerprint(binding):
    return tuple(sorted((k, Fraction(v)) for k, v in binding.items()))


def _as_fraction(v):
    return v if isinstance(v, Fraction) else Fraction(float(v))


@dataclass
class Settings:
    newton_tol: float = 1e-10
    powell_accept: float = POWELL_ACCEPT
    max_states: int = DEFAULT_MAX_STATES
    seed: int = 0
    solver: str = "auto"  # "auto", "newton" or "powell"


class Verifier:
    """Runs the recursive verification with memoised property results.

    One verifier may be reused across queries on the same world model; the
    cache is keyed by (model id, property text, binding of that model).
    """

    def __init__(self, world: WorldModel, settings: Settings | None = None, cache=None):
        self.world = world
        self.settings = settings or Settings()
        self.part = world.sccs()
        self.graph = world.graph()
        self.cache = {} if cache is None else cache
        self.resolved = {}  # scc index -> {model id: binding}
        self.report = {"dependencies": {}, "externals": {}, "scc": [], "policies": {}}
        self.max_depth = 0
        self.pmc_calls = 0

    # ------------------------------------------------------------- helpers

    def _externals(self, mid):
        out = {}
        for e in self.world.externals:
            if e.model == mid:
                try:
                    out[e.param] = infer(e.spec)
                except UmbraError as exc:
                    raise VerificationError(f"external parameter {e.key}: {exc}") from None
                self.report["externals"][e.key] = float(out[e.param])
        return out

    def build(self, mid, binding, chain=()):
        src = self.world.models[mid].source
        try:
            return build_state_space(src, binding, max_states=self.settings.max_states)
        except UmbraError as exc:
            raise VerificationError(f"model '{mid}': {exc}", chain) from None

    def pmc(self, mid, prop, binding, chain=()):
        """Check *prop* on model *mid* under *binding*, memoised."""
        text = property_text(prop)
        key = (mid, text, _fingerprint(binding))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        model = self.build(mid, binding, chain)
        try:
            res = check(model, prop)
        except UmbraError as exc:
            raise VerificationError(f"model '{mid}', property {text}: {exc}", chain) from None
        self.pmc_calls += 1
        self.cache[key] = res
        return res

    # ----------------------------------------------------------- algorithm

    def verify(self, mid, prop):
        if mid not in self.world.models:
            raise VerificationError(f"unknown model id '{mid}'")
        if isinstance(prop, str):
            try:
                prop = parse_property(prop, self.world.models[mid].kind)
            except (ParseError, PropertyError) as exc:
                raise VerificationError(f"property for '{mid}': {exc}") from None
        bindings = self.resolve(self.part.component_of[mid], (mid,), 1)
        res = self.pmc(mid, prop, bindings[mid], (mid,))
        if res.policy is not None:
            self.report["policies"][mid] = res.policy
        return res

    def resolve(self, ci, chain, depth):
        """Bindings of every model in component *ci* (memoised per component)."""
        if ci in self.resolved:
            return self.resolved[ci]
        self.max_depth = max(self.max_depth, depth)
        members = sorted(self.part.components[ci], key=list(self.world.models).index)
        bindings = {}
        for mid in members:
            b = self._externals(mid)
            for d in self.world.dependencies:
                if d.target != mid or self.part.component_of[d.source] == ci:
                    continue
                sub = self.resolve(self.part.component_of[d.source], chain + (d.source,), depth + 1)
                res = self.pmc(d.source, d.prop, sub[d.source], chain + (d.source,))
                b[d.param] = _as_fraction(res.value)
                self.report["dependencies"][d.key] = float(res.value)
                if res.policy is not None:
                    self.report["policies"][d.source] = res.policy
            bindings[mid] = b
        intra = [d for d in self.world.dependencies
                 if d.target in bindings and self.part.component_of[d.source] == ci]
        if intra:
            solved = self.verify_scc(members, intra, bindings, chain)
            for d in intra:
                bindings[d.target][d.param] = _as_fraction(solved[d.key])
                self.report["dependencies"][d.key] = float(solved[d.key])
        self.resolved[ci] = bindings
        return bindings

    def verify_scc(self, members, intra, bindings, chain=()):
        """Solve the co-dependent parameters of one component.

        Returns ``{"model.param": value}``.
        """
        keys = [d.key for d in intra]
        domains = [tuple(d.domain) if d.domain is not None else default_domain(d.param)
                   for d in intra]
        local = {}  # model id -> list of (param, global index)
        for i, d in enumerate(intra):
            local.setdefault(d.target, []).append((d.param, i))
        kinds = [self.world.models[d.source].kind for d in intra]
        record = {"models": list(members), "parameters": keys}
        solution = None
        solver = self.settings.solver
        if solver not in ("auto", "newton", "powell"):
            raise VerificationError(f"unknown solver '{solver}' (use auto, newton or powell)")
        feasible = parametric_feasible([d.prop for d in intra], kinds)
        if solver == "newton" and not feasible:
            raise VerificationError(f"co-dependent parameters {keys} are not parametric-feasible; "
                                    "Newton needs closed-form equations", chain)
        if feasible and solver != "powell":
            try:
                solution, info = self._newton(intra, keys, domains, local, bindings, chain)
                record.update(info)
            except (ParametricError, EngineError) as exc:
                if solver == "newton":
                    raise VerificationError(f"parametric model checking failed: {exc}", chain) from None
                record["parametric_fallback"] = str(exc)
        if solution is None:
            solution, info = self._powell(intra, keys, domains, local, bindings, chain)
            record.update(info)
        # the defining property: each parameter equals its property under the solution
        trial = {mid: dict(b) for mid, b in bindings.items()}
        for d in intra:
            trial[d.target][d.param] = _as_fraction(solution[d.key])
        worst = 0.0
        for d in intra:
            v = self.pmc(d.source, d.prop, trial[d.source], chain + (d.source,)).value
            worst = max(worst, abs(float(v) - solution[d.key]))
        record["fixed_point_residual"] = worst
        self.report["scc"].append(record)
        return solution

    def _symbolic(self, mid, bindings, local, chain):
        """Model *mid* with every parameter bound except its intra-component ones."""
        free = {p for p, _ in local.get(mid, [])}
        b = {k: v for k, v in bindings[mid].items() if k not in free}
        return self.build(mid, b, chain)

    def _newton(self, intra, keys, domains, local, bindings, chain):
        funcs = []
        for d in intra:
            sym = self._symbolic(d.source, bindings, local, chain)
            names = local.get(d.source, [])
            pf = PropertyFunction(sym, d.prop, [p for p, _ in names])
            funcs.append(_Scatter(pf, names, len(keys), keys))
        system = EquationSystem(keys, funcs, domains)
        try:
            res = newton_solve(system, tol=self.settings.newton_tol, seed=self.settings.seed)
        except SolverError as exc:
            raise VerificationError(
                f"co-dependent parameters {keys} did not converge: {exc} "
                f"(best residual {exc.residual}, iterations {exc.iterations})", chain) from None
        sol = dict(zip(keys, (float(v) for v in res.x)))
        return sol, {"method": "newton", "residual": res.residual,
                     "iterations": res.iterations, "restarts": res.restarts}

    def _powell(self, intra, keys, domains, local, bindings, chain):
        syms = {}
        for d in intra:
            if d.source not in syms:
                syms[d.source] = self._symbolic(d.source, bindings, local, chain)

        def evaluate(x):
            vals = []
            for d in intra:
                b = {p: _as_fraction(x[keys[i]]) for p, i in local.get(d.source, [])}
                try:
                    model = syms[d.source].substitute(b)
                    vals.append(float(check(model, d.prop).value))
                except (ModelError, EngineError) as exc:
                    raise _Infeasible(str(exc)) from None
            return vals

        def objective(xv):
            try:
                vals = evaluate(dict(zip(keys, xv)))
            except _Infeasible:
                return float("inf")
            return float(np.sum((np.asarray(xv) - np.asarray(vals)) ** 2))

        res = powell_minimize(Objective(keys, objective, domains), target=1e-24,
                              seed=self.settings.seed)
        if not np.isfinite(res.fun) or res.fun > self.settings.powell_accept:
            raise VerificationError(
                f"co-dependent parameters {keys} not resolved: best squared residual "
                f"{res.fun:.3g} after {res.evaluations} evaluations", chain)
        sol = dict(zip(keys, (float(v) for v in res.x)))
        return sol, {"method": "powell", "objective": res.fun, "iterations": res.iterations,
                     "evaluations": res.evaluations, "converged": bool(res.converged)}


class _Infeasible(Exception):
    pass


class _Scatter:
    """Wraps a model-local PropertyFunction as a function of the global key vector."""

    def __init__(self, pf, names, size, keys):
        self.pf, self.names, self.size, self.keys = pf, names, size, keys

    def value_grad(self, x):
        local = {p: x[self.keys[i]] for p, i in self.names}
        v, g = self.pf.value_grad(local)
        out = np.zeros(self.size)
        for (p, i), gi in zip(self.names, g):
            out[i] = gi
        return v, out


def verify(world: WorldModel, model_id, prop, settings: Settings | None = None):
    """Verify *prop* on model *model_id* of *world*; returns (result, report)."""
    v = Verifier(world, settings)
    res = v.verify(model_id, prop)
    return res, v.report


def verify_scc(world: WorldModel, scc, settings: Settings | None = None):
    """Solve the co-dependent parameters of the component containing the models in *scc*."""
    v = Verifier(world, settings)
    scc = set(scc)
    ci = {v.part.component_of[m] for m in scc}
    if len(ci) != 1 or set(v.part.components[ci.pop()]) != scc:
        raise VerificationError(f"{sorted(scc)} is not a strongly connected component")
    bindings = v.resolve(v.part.component_of[next(iter(scc))], tuple(sorted(scc)), 1)
    return {f"{mid}.{p}": float(val) for mid in scc for p, val in bindings[mid].items()
            if any(d.target == mid and d.param == p for d in world.dependencies)}
