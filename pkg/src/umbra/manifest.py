"""World-model manifests: JSON files naming models, dependencies, externals and sweeps."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import InferenceError, ModelError, ParseError, UmbraError, ValidationError
from .infer import InferenceSpec, load_observations, to_fraction
from .prism.source import load_model
from .worldmodel import Dependency, External, ModelEntry, WorldModel

KINDS = ["dtmc", "ctmc", "mdp", "pomdp"]

_number = {"type": ["number", "string"]}
_domain = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["models"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "models": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["id", "path"], "additionalProperties": False,
                "properties": {"id": {"type": "string", "minLength": 1},
                               "path": {"type": "string"},
                               "kind": {"enum": KINDS}},
            },
        },
        "dependencies": {
            "type": "array",
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["model", "param", "source", "property"],
                "properties": {"model": {"type": "string"}, "param": {"type": "string"},
                               "source": {"type": "string"}, "property": {"type": "string"},
                               "domain": _domain},
            },
        },
        "external": {
            "type": "array",
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["model", "param", "method"],
                "properties": {
                    "model": {"type": "string"}, "param": {"type": "string"},
                    "method": {"enum": ["fixed", "mean", "mean_rate", "bayes"]},
                    "value": _number,
                    "observations": {"type": "array", "items": _number},
                    "data": {"type": "string"},
                    "prior": {"type": "array", "items": _number},
                    "counts": {"type": "array", "items": _number},
                    "target": {"type": "integer", "minimum": 0},
                },
            },
        },
        "verify": {
            "type": "object", "required": ["model", "property"], "additionalProperties": False,
            "properties": {"model": {"type": "string"}, "property": {"type": "string"}},
        },
        "sweeps": {
            "type": "array",
            "items": {
                "type": "object", "required": ["param"], "additionalProperties": False,
                "properties": {
                    "model": {"type": "string"}, "param": {"type": "string"},
                    "values": {"type": "array", "items": _number, "minItems": 1},
                    "range": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                    "step": _number,
                },
            },
        },
    },
}


@dataclass
class SweepAxis:
    name: str  # "param" or "model.param", as accepted by overrides
    values: list

    @classmethod
    def parse(cls, text):
        """``name=v1,v2,...`` or ``name=lo:hi:step``."""
        name, sep, rest = text.partition("=")
        if not sep or not name.strip() or not rest.strip():
            raise ValidationError([f"sweep axis {text!r}: expected name=v1,v2 or name=lo:hi:step"])
        try:
            if ":" in rest:
                lo, hi, step = (to_fraction(p) for p in rest.split(":"))
                values = grid(lo, hi, step)
            else:
                values = [to_fraction(v) for v in rest.split(",")]
        except (InferenceError, ValueError) as exc:
            raise ValidationError([f"sweep axis {text!r}: {exc}"]) from None
        return cls(name.strip(), values)


def grid(lo, hi, step):
    """Inclusive arithmetic grid in exact arithmetic, so 0.1:0.9:0.1 has 9 points."""
    if step <= 0:
        raise ValueError("step must be positive")
    if hi < lo:
        raise ValueError("range upper bound below lower bound")
    n = int((hi - lo) / step)
    return [lo + i * step for i in range(n + 1)]


@dataclass
class Manifest:
    path: Path | None
    world: WorldModel
    verify_model: str | None = None
    verify_property: str | None = None
    sweeps: list = field(default_factory=list)
    name: str = "world"

    def grid_points(self, axes=None):
        axes = self.sweeps if axes is None else axes
        return [dict(zip((a.name for a in axes), combo))
                for combo in itertools.product(*(a.values for a in axes))]


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError([f"cannot read manifest {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ValidationError([f"{path}: invalid JSON: {exc}"]) from None
    return manifest_from_dict(data, path.parent, path)


def manifest_from_dict(data, base=".", path=None) -> Manifest:
    base = Path(base)
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                for e in sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))]
    if problems:
        raise ValidationError(problems)

    models = []
    for m in data["models"]:
        file = base / m["path"]
        if not file.is_file():
            problems.append(f"model '{m['id']}': file not found: {m['path']}")
            continue
        try:
            src = load_model(file, m.get("kind"))
        except (ParseError, ModelError) as exc:
            problems.append(f"model '{m['id']}' ({m['path']}): {exc}")
            continue
        if m.get("kind") and src.kind != m["kind"]:
            problems.append(f"model '{m['id']}': declared kind {m['kind']} but the file is a {src.kind}")
        models.append(ModelEntry(m["id"], src, str(file)))

    deps = [Dependency(d["model"], d["param"], d["source"], d["property"],
                       tuple(d["domain"]) if "domain" in d else None)
            for d in data.get("dependencies", [])]

    externals = []
    for e in data.get("external", []):
        try:
            obs = list(e.get("observations", []))
            if "data" in e:
                file = base / e["data"]
                if not file.is_file():
                    raise InferenceError(f"data file not found: {e['data']}")
                obs += load_observations(file)
            spec = InferenceSpec(e["method"], value=e.get("value"), observations=obs,
                                 prior=e.get("prior", []), counts=e.get("counts", []),
                                 target=e.get("target", 0))
        except InferenceError as exc:
            problems.append(f"external parameter {e['model']}.{e['param']}: {exc}")
            continue
        externals.append(External(e["model"], e["param"], spec))

    axes = []
    for s in data.get("sweeps", []):
        name = f"{s['model']}.{s['param']}" if s.get("model") else s["param"]
        try:
            if "values" in s:
                values = [to_fraction(v) for v in s["values"]]
            elif "range" in s and "step" in s:
                values = grid(to_fraction(s["range"][0]), to_fraction(s["range"][1]),
                              to_fraction(s["step"]))
            else:
                raise ValueError("give either values or range and step")
        except (InferenceError, ValueError) as exc:
            problems.append(f"sweep over {name}: {exc}")
            continue
        axes.append(SweepAxis(name, values))

    world = None
    try:
        world = WorldModel(models, deps, externals)
    except ValidationError as exc:
        problems.extend(exc.problems)
    ids = {m["id"] for m in data["models"]}
    v = data.get("verify")
    if v and v["model"] not in ids:
        problems.append(f"verify: unknown model id '{v['model']}'")
    if problems:
        raise ValidationError(problems)
    return Manifest(path, world, v["model"] if v else None, v["property"] if v else None,
                    axes, data.get("name", path.stem if path else "world"))


def parse_overrides(items) -> dict:
    """``["name=value", "model.name=value"]`` -> {name: Fraction}."""
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise ValidationError([f"--set {item!r}: expected name=value"])
        try:
            out[name.strip()] = to_fraction(value)
        except UmbraError as exc:
            raise ValidationError([f"--set {item!r}: {exc}"]) from None
    return out

