"""Command-line front end: ``umbra verify | sweep | graph``.

Exit codes: 0 success, 1 usage or manifest errors, 2 verification errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

from .errors import UmbraError, ValidationError
from .graph import to_dot
from .manifest import SweepAxis, load_manifest, parse_overrides
from .worldmodel import Settings, Verifier

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jsonable(v):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, (int, float)):
        v = float(v) if not isinstance(v, int) else v
        if isinstance(v, float) and not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return v
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return str(v)


def dumps(record) -> str:
    return json.dumps(_jsonable(record), sort_keys=True, indent=2) + "\n"


def _settings(args):
    s = Settings()
    if args.tol is not None:
        s.newton_tol = s.powell_accept = args.tol
    if args.max_states is not None:
        s.max_states = args.max_states
    return s


def run_verify(manifest, model, prop, overrides=None, settings=None):
    """One verification session; returns a result record (never raises UmbraError)."""
    started = time.perf_counter()
    record = {"model": model, "property": prop, "value": None, "error": None}
    try:
        world = manifest.world.with_overrides(overrides) if overrides else manifest.world
        v = Verifier(world, settings)
        res = v.verify(model, prop)
        record["value"] = res.value
        record.update({k: v.report[k] for k in ("dependencies", "externals", "scc", "policies")})
        if res.policy is not None:
            record["policy"] = res.policy
    except ValidationError as exc:
        record["error"] = "; ".join(exc.problems)
        record["error_kind"] = "validation"
    except UmbraError as exc:
        record["error"] = str(exc)
        record["error_kind"] = "verification"
    record["duration_s"] = time.perf_counter() - started
    return record


def _query(manifest, args):
    model = args.model or manifest.verify_model
    prop = args.property or manifest.verify_property
    if not model or not prop:
        raise ValidationError(["no query: give --model and --property or a 'verify' entry "
                               "in the manifest"])
    return model, prop


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _table(record) -> str:
    out = [f"model     {record['model']}", f"property  {record['property']}"]
    if record["error"]:
        out.append(f"error     {record['error']}")
    else:
        out.append(f"result    {_fmt(_jsonable(record['value']))}")
    deps = record.get("dependencies") or {}
    if deps:
        out.append("dependency parameters:")
        w = max(len(k) for k in deps)
        out += [f"  {k:<{w}}  {_fmt(v)}" for k, v in sorted(deps.items())]
    ext = record.get("externals") or {}
    if ext:
        out.append("external parameters:")
        w = max(len(k) for k in ext)
        out += [f"  {k:<{w}}  {_fmt(v)}" for k, v in sorted(ext.items())]
    if record.get("scc"):
        out.append("co-dependencies:")
    for scc in record.get("scc") or ():
        out.append(f"  {'+'.join(scc['models'])}: {scc['method']}, {scc['iterations']} iterations, "
                   f"fixed-point residual {scc['fixed_point_residual']:.3g}")
    if record.get("policy"):
        out.append("policy:")
        out += [f"  {k} -> {a}" for k, a in record["policy"].items()]
    out.append(f"time      {record['duration_s']:.3f} s")
    return "\n".join(x for x in out if x) + "\n"


# ------------------------------------------------------------------ commands

def cmd_verify(args) -> int:
    manifest = load_manifest(args.manifest)
    model, prop = _query(manifest, args)
    record = run_verify(manifest, model, prop, parse_overrides(args.set), _settings(args))
    sys.stdout.write(_table(record))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(record))
    if record["error"]:
        return EXIT_USAGE if record.get("error_kind") == "validation" else EXIT_VERIFY
    return EXIT_OK


def _sweep_point(job):
    path, model, prop, overrides, settings = job
    manifest = _load_cached(path)
    return run_verify(manifest, model, prop, overrides, settings)


_MANIFESTS = {}


def _load_cached(path):
    if path not in _MANIFESTS:
        _MANIFESTS[path] = load_manifest(path)
    return _MANIFESTS[path]


def thread_count(requested=None):
    env = os.environ.get("UMBRA_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValidationError([f"UMBRA_THREADS={env!r} is not an integer"]) from None
    return max(1, min(cap, requested)) if requested else cap


def sweep_rows(manifest, axes, model, prop, base_overrides=None, settings=None, threads=1):
    """Run one verification per grid point; rows come back in grid order."""
    points = manifest.grid_points(axes)
    jobs = [(str(manifest.path), model, prop, {**(base_overrides or {}), **p}, settings)
            for p in points]
    if threads > 1 and len(jobs) > 1 and manifest.path is not None:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            records = list(pool.map(_sweep_point, jobs))
    else:
        records = [run_verify(manifest, model, prop, j[3], settings) for j in jobs]
    return points, records


def _number_text(v):
    v = Fraction(v)
    return str(v.numerator) if v.denominator == 1 else repr(float(v))


def sweep_csv(axes, points, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([a.name for a in axes] + ["result", "duration_s", "error"])
    for p, r in zip(points, records):
        value = "" if r["error"] else _jsonable(r["value"])
        w.writerow([_number_text(p[a.name]) for a in axes]
                   + [value if isinstance(value, str) else repr(value),
                      f"{r['duration_s']:.6f}", r["error"] or ""])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest)
    model, prop = _query(manifest, args)
    axes = [SweepAxis.parse(a) for a in args.axis] if args.axis else manifest.sweeps
    if not axes:
        raise ValidationError(["no sweep axes: give --axis name=values or 'sweeps' in the manifest"])
    points, records = sweep_rows(manifest, axes, model, prop, parse_overrides(args.set),
                                 _settings(args), thread_count(args.threads))
    text = sweep_csv(axes, points, records)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_graph(args) -> int:
    manifest = load_manifest(args.manifest)
    world = manifest.world
    text = to_dot(world.graph(), world.sccs(), manifest.name)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="umbra", description="Verify systems of interdependent stochastic models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, query=True):
        sp.add_argument("manifest", help="world-model manifest (JSON)")
        sp.add_argument("--out", help="write the result here")
        if query:
            sp.add_argument("--model", help="model id to query (default: manifest 'verify')")
            sp.add_argument("--property", help="property text (default: manifest 'verify')")
            sp.add_argument("--set", action="append", default=[], metavar="NAME=VALUE",
                            help="pin an external parameter or constant; NAME may be model.name")
            sp.add_argument("--tol", type=float, help="solver tolerance for co-dependencies")
            sp.add_argument("--max-states", type=int, help="state-space size limit per model")

    common(sub.add_parser("verify", help="verify one property"))
    sw = sub.add_parser("sweep", help="verify over a grid of parameter values, CSV output")
    common(sw)
    sw.add_argument("--axis", action="append", default=[], metavar="NAME=V1,V2|LO:HI:STEP",
                    help="grid axis; replaces the manifest sweeps when given")
    sw.add_argument("--threads", type=int, help="worker processes (capped by UMBRA_THREADS)")
    common(sub.add_parser("graph", help="dependency graph as Graphviz DOT"), query=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"verify": cmd_verify, "sweep": cmd_sweep, "graph": cmd_graph}[args.command]
    try:
        return handler(args)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except UmbraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
