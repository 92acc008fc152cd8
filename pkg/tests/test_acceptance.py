"""Acceptance criteria; each prints one PASS/FAIL line with its tolerance."""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE
from umbra.cli import main, sweep_rows, thread_count
from umbra.engines import check, check_dtmc
from umbra.engines.steady import compute_steady_state
from umbra.graph import compute_sccs
from umbra.infer import InferenceSpec, infer
from umbra.manifest import load_manifest
from umbra.parametric import eliminate_states, eval_rf, rf_partials
from umbra.prism.explicit import build_state_space
from umbra.prism.source import parse_model
from umbra.solve import EquationSystem, Objective, newton_system, powell_minimize
from umbra.worldmodel import Verifier

import oracles
from _models import (BIRTH_DEATH, CASES, FIG2, TWO_STATE_CTMC, build, induced,
                     memoryless_policies, random_ctmc_text, random_dtmc_text, random_mdp_text,
                     reach_by_squaring)
from test_graph import brute_force_sccs, graph_of
from test_parametric import random_rf, finite_difference
from test_solve import Fn


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def timed(f):
    t = time.perf_counter()
    out = f()
    return out, time.perf_counter() - t


def test_1_engine_correctness():
    fig2, t1 = timed(lambda: check_dtmc(build(FIG2), "P=? [F s=1]").value)
    ctmc, t2 = timed(lambda: check(build(TWO_STATE_CTMC), 'P=? [F<=10 "done"]').value)
    pi, t3 = timed(lambda: compute_steady_state(build(BIRTH_DEATH)))
    e1 = abs(fig2 - 16 / 19)
    e2 = abs(ctmc - (1 - math.exp(-1)))
    e3 = float(np.max(np.abs(pi - np.array([4, 2, 1]) / 7)))
    slowest = max(t1, t2, t3)
    ok = e1 < 1e-9 and e2 < 1e-6 and e3 < 1e-10 and slowest < 0.1
    verdict(1, ok, f"fig2 err {e1:.1e} (<1e-9), ctmc err {e2:.1e} (<1e-6), steady err {e3:.1e} "
                   f"(<1e-10), slowest {slowest * 1e3:.1f} ms (<100 ms)")


def test_2_parametric_soundness():
    rng = np.random.default_rng(2024)
    names = ["p", "q", "r"]
    worst, models = 0.0, 0
    start = time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(3, 16))
        params = names[:int(rng.integers(1, 4))]
        src = parse_model(random_dtmc_text(rng, n, params))
        f = eliminate_states(build_state_space(src), 'P=? [F "goal"]')
        for _ in range(20):
            b = {k: Fraction(int(rng.integers(1, 1000)), 1000) for k in params}
            want = check_dtmc(build_state_space(src, b), 'P=? [F "goal"]').value
            worst = max(worst, abs(float(eval_rf(f, b)) - want))
        models += 1
    took = time.perf_counter() - start
    verdict(2, worst < 1e-9 and models >= 100 and took < 30,
            f"{models} models x 20 bindings, max err {worst:.1e} (<1e-9), {took:.1f} s (<30 s)")


def test_3_scc_equivalence():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        d = rng.uniform(0, 0.4)
        g = graph_of(n, [(a, b) for a in range(n) for b in range(n) if rng.random() < d])
        if set(compute_sccs(g).components) != brute_force_sccs(g)[0]:
            mismatches += 1
    world = load_manifest(CASES / "rad" / "manifest.json").world
    part = world.sccs()
    rad_ok = (set(part.components) == {frozenset({"gp"}), frozenset({"um", "umc"}), frozenset({"dp"})}
              and part.levels == {"gp": 0, "um": 0, "umc": 0, "dp": 1})
    took = time.perf_counter() - start
    verdict(3, mismatches == 0 and rad_ok and took < 5,
            f"200 random digraphs, {mismatches} mismatches; RAD partition/levels "
            f"{'match' if rad_ok else 'differ'}; {took:.2f} s (<5 s)")


def test_4_co_dependency_resolution():
    results = {}
    took = 0.0
    for case, query, keys in (
            ("smd", ("ms", 'P=? [F "detected"]'), {"ms.pLow": "pLow", "ms.pMed": "pMed",
                                                   "sl.pDetect": "pDetect"}),
            ("dpmfx", ("fx", 'R{"time"}=? [F "done"]'), {"dpm.diskOps": "diskOps",
                                                        "fx.avrQueueDiskOps": "avrQueueDiskOps"})):
        v = Verifier(load_manifest(CASES / case / "manifest.json").world)
        _, t = timed(lambda: v.verify(*query))
        took += t
        (scc,) = v.report["scc"]
        results[case] = (scc, {k: v.report["dependencies"][k] for k in keys}, keys)
    oracle = {"smd": oracles.smd_fixed_point(), "dpmfx": oracles.dpm_fixed_point()}
    ok = results["smd"][0]["method"] == "newton" and results["dpmfx"][0]["method"] == "powell"
    parts = []
    for case, (scc, got, keys) in results.items():
        err = max(abs(got[k] - oracle[case][p]) for k, p in keys.items())
        ok &= scc["fixed_point_residual"] < 1e-6 and err < 1e-4
        parts.append(f"{case} {scc['method']} residual {scc['fixed_point_residual']:.1e} (<1e-6), "
                     f"oracle err {err:.1e} (<1e-4)")
    ok &= took < 30
    verdict(4, ok, "; ".join(parts) + f"; {took:.1f} s (<30 s)")


def test_5_end_to_end_rad(tmp_path, capsys):
    out = tmp_path / "rad.json"
    code = main(["verify", str(CASES / "rad" / "manifest.json"), "--out", str(out)])
    capsys.readouterr()
    rec = json.loads(out.read_text())
    want, _ = oracles.rad_pipeline()
    value = rec["value"]
    err = abs(value - want) if value is not None else math.inf
    ok = code == 0 and value is not None and 0 <= value <= 1 and err < 1e-6 and rec["duration_s"] <= 10
    verdict(5, ok, f"Pmin=? [F step=6] = {value:.6f}, oracle err {err:.1e} (<1e-6), "
                   f"{rec['duration_s']:.2f} s (<=10 s)")


def test_6_sweeps():
    fleet = load_manifest(CASES / "robofleet" / "manifest.json")
    _, fail_rows = sweep_rows(fleet, fleet.sweeps, "sup", 'R{"failures"}=? [F "done"]')
    _, cost_rows = sweep_rows(fleet, fleet.sweeps, "sup", 'R{"cost"}=? [F "done"]')
    failures = [r["value"] for r in fail_rows]
    cost = [r["value"] for r in cost_rows]
    mono = all(b <= a for a, b in zip(failures, failures[1:]))
    cost_mono = all(b <= a for a, b in zip(cost, cost[1:]))
    rad = load_manifest(CASES / "rad" / "manifest.json")
    (_, rows), took = timed(lambda: sweep_rows(rad, rad.sweeps, rad.verify_model, rad.verify_property,
                                               threads=thread_count()))
    in_range = all(r["error"] is None and 0 <= r["value"] <= 1 for r in rows)
    ok = mono and cost_mono and len(rows) == 81 and in_range and took < 300
    verdict(6, ok, f"robofleet failures {'non-increasing' if mono else 'NOT monotone'}, cost "
                   f"{'non-increasing' if cost_mono else 'NOT monotone'}; RAD {len(rows)} points "
                   f"in [0,1]: {in_range}, {took:.1f} s (<300 s)")


def test_7_solver_suite():
    rng = np.random.default_rng(7)
    worst_iters = 0
    for _ in range(20):
        n = int(rng.integers(1, 5))
        A = rng.uniform(-0.3, 0.3, size=(n, n)) / n
        c = rng.uniform(0.1, 0.5, size=n)
        names = [f"v{i}" for i in range(n)]
        fs = [Fn(lambda b, i=i: c[i] + sum(A[i, j] * b[names[j]] for j in range(n)),
                 lambda b, i=i: A[i]) for i in range(n)]
        worst_iters = max(worst_iters, newton_system(EquationSystem(names, fs, [(-10, 10)] * n),
                                                     np.zeros(n)).iterations)
    res = powell_minimize(Objective(["x", "y"], lambda v: (v[0] - 1) ** 2 + (v[1] - 2) ** 2,
                                    [(-5, 5), (-5, 5)]), [0, 0])
    bowl = float(np.max(np.abs(res.x - [1, 2])))
    worst_rel, checked = 0.0, 0
    while checked < 50:
        f = random_rf(rng, ["p", "q", "r"])
        at = {k: float(rng.uniform(0.1, 0.9)) for k in ("p", "q", "r")}
        if abs(f.den.evalf(at)) < 1e-2:
            continue
        for name, d in rf_partials(f, ["p", "q", "r"]).items():
            exact = d.evalf(at)
            worst_rel = max(worst_rel, abs(exact - finite_difference(f, at, name)) / max(1.0, abs(exact)))
        checked += 1
    ok = worst_iters <= 2 and bowl < 1e-6 and worst_rel < 1e-6
    verdict(7, ok, f"affine Newton max {worst_iters} iterations (<=2), Powell bowl err {bowl:.1e} "
                   f"(<1e-6), partials rel err {worst_rel:.1e} on {checked} functions (<1e-6)")


def test_8_inference():
    bayes = infer(InferenceSpec("bayes", prior=[1, 1], counts=[3, 1], target=0))
    rate = infer(InferenceSpec("mean_rate", observations=[47, 92, 61]))
    ok = bayes == Fraction(4, 6) and rate == Fraction(15, 1000)
    verdict(8, ok, f"bayes = {bayes} (exactly 2/3), mean_rate = {rate} (exactly 3/200)")


def _goal(m, n):
    return np.array([m.var_values("s")[i] == n - 1 for i in range(m.n)])


def test_9_engine_properties():
    rng = np.random.default_rng(9)
    dual_bad = mono_bad = single_bad = 0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        m = build(random_mdp_text(rng, n, max_actions=2))
        goal = _goal(m, n)
        # min over policies of reaching goal is one minus max of staying out of it forever
        stay = [1 - reach_by_squaring(induced(m, pol), goal)[m.initial] for pol in memoryless_policies(m)]
        if abs(check(m, 'Pmin=? [F "goal"]').value - (1 - max(stay))) > 1e-7:
            dual_bad += 1
    for _ in range(50):
        m = build(random_ctmc_text(rng, int(rng.integers(2, 9))))
        vals = [check(m, f'P=? [F<={t} "goal"]').value for t in (0.1, 0.5, 1, 2, 5)]
        if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
            mono_bad += 1
    for _ in range(50):
        text = random_dtmc_text(rng, int(rng.integers(3, 12)), [])
        d, m = build(text), build(text.replace("dtmc", "mdp", 1))
        want = check(d, 'P=? [F "goal"]').value
        if any(abs(check(m, f'P{o}=? [F "goal"]').value - want) > 1e-9 for o in ("min", "max")):
            single_bad += 1
    ok = dual_bad == mono_bad == single_bad == 0
    verdict(9, ok, f"min/max duality {50 - dual_bad}/50, ctmc monotone in t {50 - mono_bad}/50, "
                   f"single-action mdp = dtmc {50 - single_bad}/50 (tol 1e-7/1e-12/1e-9)")
