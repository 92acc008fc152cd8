import csv
import io
import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from umbra.cli import main, run_verify, sweep_csv, sweep_rows
from umbra.manifest import SweepAxis, grid, load_manifest

import oracles
from _models import CASES

RAD = str(CASES / "rad" / "manifest.json")
FLEET = str(CASES / "robofleet" / "manifest.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def without_duration(record):
    return {k: v for k, v in record.items() if k != "duration_s"}


def test_verify_rad(capsys, tmp_path):
    out_file = tmp_path / "r.json"
    code, out, _ = run(capsys, "verify", RAD, "--out", str(out_file))
    assert code == 0
    rec = json.loads(out_file.read_text())
    assert 0 <= rec["value"] <= 1
    assert rec["value"] == pytest.approx(oracles.rad_pipeline()[0], abs=1e-6)
    names = {k.split(".")[1] for k in rec["dependencies"]}
    assert names == {"pPickGarment", "pOkCorrect", "pNotOkCorrect", "pModel1", "pModel2"}
    assert rec["error"] is None and rec["duration_s"] >= 0
    (scc,) = rec["scc"]
    assert scc["models"] == ["um", "umc"] and scc["method"] == "newton"
    assert "result" in out and "dp.pPickGarment" in out


def test_verify_json_is_deterministic(capsys, tmp_path):
    texts = []
    for i in range(2):
        f = tmp_path / f"{i}.json"
        assert run(capsys, "verify", RAD, "--out", str(f))[0] == 0
        texts.append(json.dumps(without_duration(json.loads(f.read_text())), sort_keys=True))
    assert texts[0] == texts[1]


def test_override_single_attempt(capsys, tmp_path):
    f = tmp_path / "r.json"
    assert run(capsys, "verify", RAD, "--set", "pRetry=0", "--out", str(f))[0] == 0
    rec = json.loads(f.read_text())
    rate, psucc = Fraction(5, 333), 18 / 22
    assert rec["dependencies"]["dp.pPickGarment"] == pytest.approx(
        psucc * (1 - math.exp(-float(rate) * 90)), abs=1e-9)
    assert rec["externals"]["gp.pRetry"] == 0


def test_query_flags(capsys):
    code, out, _ = run(capsys, "verify", FLEET, "--model", "r1", "--property", 'Pmax=? [F "done"]')
    assert code == 0 and "policy:" in out


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "verify", RAD, "--property", 'Pmin=? [F "nope"]')[0] == 2
    assert run(capsys, "verify", RAD, "--set", "noSuchParam=1")[0] == 1
    assert run(capsys, "verify", RAD, "--set", "broken")[0] == 1
    assert run(capsys, "verify", str(tmp_path / "missing.json"))[0] == 1
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["verify", RAD, "--tol", "abc"])
    assert info.value.code == 1


def write_manifest(tmp_path, data):
    f = tmp_path / "m.json"
    f.write_text(json.dumps(data))
    return str(f)


def rad_data():
    data = json.loads((CASES / "rad" / "manifest.json").read_text())
    for m in data["models"]:
        m["path"] = str(CASES / "rad" / m["path"])
    for e in data["external"]:
        if "data" in e:
            e["data"] = str(CASES / "rad" / e["data"])
    return data


def test_unknown_model_id_is_named(capsys, tmp_path):
    data = rad_data()
    data["dependencies"][0]["source"] = "gripper"
    code, _, err = run(capsys, "verify", write_manifest(tmp_path, data))
    assert code == 1 and "'gripper'" in err


def test_validation_lists_all_problems(capsys, tmp_path):
    data = rad_data()
    data["dependencies"][0]["source"] = "gripper"
    data["dependencies"][1]["property"] = "P=? [F"
    data["external"] = data["external"][1:]
    data["models"][0]["kind"] = "dtmc"
    code, _, err = run(capsys, "verify", write_manifest(tmp_path, data))
    assert code == 1
    assert len([ln for ln in err.splitlines() if ln.startswith("error:")]) >= 3


def test_schema_errors(capsys, tmp_path):
    code, _, err = run(capsys, "graph", write_manifest(tmp_path, {"models": [{"id": "a"}], "x": 1}))
    assert code == 1 and "path" in err and "'x'" in err


def test_graph(capsys):
    code, out, _ = run(capsys, "graph", RAD)
    assert code == 0
    assert out.startswith("digraph")
    assert out.count("subgraph cluster_") == 3
    assert out.count(" -> ") == 4
    assert sum(1 for ln in out.splitlines() if "(level" in ln) == 4


def test_graph_empty_dependencies(capsys, tmp_path):
    data = {"models": [{"id": "a", "path": str(CASES / "robofleet" / "robot1.mdp")},
                       {"id": "b", "path": str(CASES / "robofleet" / "robot2.mdp")}]}
    code, out, _ = run(capsys, "graph", write_manifest(tmp_path, data))
    assert code == 0 and out.count("subgraph cluster_") == 2 and " -> " not in out


def parse_csv(text):
    return list(csv.DictReader(io.StringIO(text, newline="")))


def test_robofleet_sweep_monotone(capsys):
    code, out, _ = run(capsys, "sweep", FLEET)
    assert code == 0
    rows = parse_csv(out)
    assert [r["sup.nAttempts"] for r in rows] == ["1", "2", "3", "4"]
    failures = [float(r["result"]) for r in rows]
    assert all(b <= a for a, b in zip(failures, failures[1:]))
    for n, v in zip(range(1, 5), failures):
        assert v == pytest.approx(oracles.fleet_manual(n), abs=1e-9)
    code, out, _ = run(capsys, "sweep", FLEET, "--property", 'R{"cost"}=? [F "done"]')
    cost = [float(r["result"]) for r in parse_csv(out)]
    assert all(b <= a for a, b in zip(cost, cost[1:]))


def test_csv_format(capsys):
    code, out, _ = run(capsys, "sweep", FLEET, "--axis", "nAttempts=1,2")
    assert out.split("\r\n")[0] == "nAttempts,result,duration_s,error"
    assert out.endswith("\r\n") and out.count("\r\n") == 3


def test_single_point_sweep_equals_verify(capsys, tmp_path):
    m = load_manifest(RAD)
    axes = [SweepAxis.parse("pOk=0.5")]
    points, records = sweep_rows(m, axes, "dp", m.verify_property)
    direct = run_verify(m, "dp", m.verify_property, {"pOk": Fraction(1, 2)})
    assert len(records) == 1
    assert records[0]["value"] == direct["value"]
    text = sweep_csv(axes, points, records)
    assert float(parse_csv(text)[0]["result"]) == direct["value"]


def test_sweep_failures_are_recorded(capsys):
    code, out, _ = run(capsys, "sweep", RAD, "--axis", "pOk=0.5,2,0.6")
    assert code == 0
    rows = parse_csv(out)
    assert len(rows) == 3
    assert rows[0]["error"] == "" and rows[2]["error"] == ""
    assert rows[1]["result"] == "" and "probab" in rows[1]["error"]


def test_parallel_rows_match_sequential(monkeypatch, capsys):
    monkeypatch.setenv("UMBRA_THREADS", "2")
    m = load_manifest(FLEET)
    axes = m.sweeps
    _, seq = sweep_rows(m, axes, "sup", m.verify_property, threads=1)
    _, par = sweep_rows(m, axes, "sup", m.verify_property, threads=2)
    assert [r["value"] for r in seq] == [r["value"] for r in par]


def test_grid_row_count():
    assert len(grid(Fraction(1, 10), Fraction(9, 10), Fraction(1, 10))) == 9
    m = load_manifest(RAD)
    assert len(m.grid_points()) == 81
    assert len(m.grid_points([SweepAxis.parse("a=1,2,3"), SweepAxis.parse("b=0:1:0.25")])) == 15


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "umbra.cli", "graph", RAD],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0 and "digraph" in proc.stdout
