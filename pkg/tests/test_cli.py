import csv
import json

import pytest

from dernoe import cli, fixtures
from dernoe.network import serialize, serialize_snapshot
from dernoe.plot import svg_polygons


@pytest.fixture
def files(tmp_path):
    net, snap = fixtures.canonical()
    n, s = tmp_path / "net.json", tmp_path / "snap.json"
    n.write_text(json.dumps(serialize(net)))
    s.write_text(json.dumps(serialize_snapshot(snap)))
    return str(n), str(s)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_compute_from_files(files, tmp_path):
    out = tmp_path / "noe.json"
    assert run("compute", "--kind", "feasibility", "--network", files[0], "--snapshot", files[1],
               "-K", 20, "--jobs", 1, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert len(doc["meta"]["points"]) == 44
    assert doc["frame"] == "absolute_import"


def test_compute_ramp(tmp_path):
    out = tmp_path / "r.json"
    assert run("compute", "--kind", "ramp", "--tau", "30", "-K", 4, "--jobs", 1, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["params"] == {"tau_s": 30.0}


def test_svg_matches_json(tmp_path):
    j, s = tmp_path / "a.json", tmp_path / "a.svg"
    args = ["compute", "--kind", "feasibility", "-K", 6, "--jobs", 1]
    assert run(*args, "-o", j) == 0
    assert run(*args, "--format", "svg", "-o", s) == 0
    text = s.read_text()
    assert text.startswith("<svg") and 'version="1.1"' in text
    assert svg_polygons(text) == [[tuple(v) for v in json.loads(j.read_text())["boundary"]]]


def test_csv_output(tmp_path):
    out = tmp_path / "a.csv"
    assert run("compute", "--kind", "capability", "--format", "csv", "-o", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows and min(float(r["p_mw"]) for r in rows) == pytest.approx(-1.5)


def test_missing_file_is_input_error(capsys):
    assert run("compute", "--kind", "feasibility", "--network", "/no/such.json", "--snapshot", "x") == 2
    assert "error" in capsys.readouterr().err


def test_stack_levels_with_units(tmp_path):
    out = tmp_path / "d.json"
    assert run("stack", "--kind", "duration", "--levels", "0.00167h,0.0833h,2h", "-K", 4, "--jobs", 1,
               "-o", out) == 0
    doc = json.loads(out.read_text())
    assert [lv["value"] for lv in doc["levels"]] == [0.00167, 0.0833, 2.0]
    assert doc["violations"] == []


def test_economic_stack(tmp_path):
    out = tmp_path / "e.json"
    assert run("stack", "--kind", "economic", "--levels", "27,80,325,475", "-K", 4, "--jobs", 1, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert len(doc["levels"]) == 4 and doc["violations"] == []


def test_empty_levels():
    assert run("stack", "--kind", "economic", "--levels", "") == 2


@pytest.mark.parametrize("text,axis,value", [
    ("6s", "tau", 6.0), ("5min", "tau", 300.0), ("2h", "psi", 2.0), ("10min", "psi", 1 / 6), ("0.5", "psi", 0.5),
])
def test_parse_level(text, axis, value):
    assert cli.parse_level(text, axis) == pytest.approx(value)


def test_parse_level_rejects():
    for text, axis in (("abc", "tau"), ("5min", "cost")):
        with pytest.raises(cli.InputError):
            cli.parse_level(text, axis)


def test_bidstack(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert run("bidstack", "--service", "long_dr", "--levels", "27,80,325,475", "-K", 4, "--jobs", 1,
               "-o", out) == 0
    assert json.loads(out.read_text())["tranches"]
    assert run("bidstack", "--service", "nope", "--levels", "1") == 2
    assert "long_dr" in capsys.readouterr().err


def test_verify(tmp_path):
    out = tmp_path / "v.json"
    assert run("verify", "--samples", 500, "--trend", "200", "--seed", 7, "-K", 6, "--jobs", 1, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert [r["samples"] for r in doc["runs"]] == [200, 500]
    assert run("verify", "--samples", 0) == 2


def test_sweep_k(tmp_path):
    out = tmp_path / "k.csv"
    assert run("sweep-k", "--ks", "1,4,8", "--jobs", 1, "-o", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["k"]) for r in rows] == [1, 4, 8]
    assert float(rows[-1]["normalized_area"]) == 1.0
    assert rows[0]["wall_time_s"] == ""


def test_aggregate_children(tmp_path):
    child = tmp_path / "c.json"
    assert run("compute", "--kind", "feasibility", "-K", 6, "--jobs", 1, "-o", child) == 0
    up = {"base_mva": 10.0, "root": "gsp", "buses": [{"id": "gsp", "v_nom_kv": 33.0}], "branches": []}
    upf, snapf = tmp_path / "up.json", tmp_path / "s.json"
    upf.write_text(json.dumps(up))
    snapf.write_text(json.dumps({"dt_h": 0.5}))
    out = tmp_path / "sys.json"
    assert run("aggregate", "--children", child, "--network", upf, "--snapshot", snapf, "-K", 6,
               "--jobs", 1, "-o", out) == 0
    assert json.loads(out.read_text())["meta"]["children"] == 1


@pytest.mark.parametrize("argv", [
    ["compute", "--kind", "technical", "--tau", "300", "--psi", "10min", "-K", 6],
    ["stack", "--kind", "ramp", "--levels", "1s,30s,5min", "-K", 4],
])
def test_byte_identical_across_jobs(tmp_path, argv):
    outs = []
    for jobs in (1, 8, 1):
        out = tmp_path / f"o{len(outs)}.json"
        assert run(*argv, "--jobs", jobs, "-o", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_refine_and_restart_flags(tmp_path):
    plain, fine = tmp_path / "p.json", tmp_path / "f.json"
    base = ["compute", "--kind", "feasibility", "--network", "builtin:five_bus", "-K", 4, "--jobs", 1]
    assert run(*base, "-o", plain) == 0
    assert run(*base, "--refine-tol", "1e-4", "--restarts", "1e-3,0.1", "-o", fine) == 0
    a, b = (json.loads(p.read_text()) for p in (plain, fine))
    assert len(b["meta"]["points"]) > len(a["meta"]["points"])
    assert run(*base, "--restarts", "0,1") == 2
    assert run(*base, "--refine-tol", "-1") == 2
