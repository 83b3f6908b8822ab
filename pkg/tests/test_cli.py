import csv
import io
import json

import jsonschema
import pytest

from lindtree.cli import main

from conftest import MODELS, ROOT


def _m(name):
    return str(MODELS / f"{name}.json")


def _schema(name):
    return json.loads((ROOT / "schemas" / f"{name}.schema.json").read_text())


def test_expand_writes_table(tmp_path):
    out = tmp_path / "table.json"
    assert main(["expand", "--model", _m("sysA"), "--order", "4", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    jsonschema.validate(data, _schema("table"))
    eta2 = [r["poly"] for r in data["eta"] if r["k"] == 2]
    assert eta2 == ["(10/3) * c1+^1 c1-^1"]


def test_expand_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["expand", "--model", _m("g2"), "--order", "3", "--out", str(p)]) == 0
    assert a.read_text() == b.read_text()


def test_verify_trees(capsys):
    assert main(["verify-trees", "--model", _m("sysA"), "--order", "3"]) == 0
    cap = capsys.readouterr()
    rep = json.loads(cap.out)
    jsonschema.validate(rep, _schema("report"))
    assert rep["result"] == "match: all (k,j,nu)"
    assert "match: all (k,j,ν)" in cap.err


@pytest.mark.parametrize("cmd", [
    ["eta", "--order", "4"],
    ["verify-symmetry", "--force-localize"],
    ["verify-counting", "--order", "2"],
])
def test_verifiers_pass(cmd, capsys):
    assert main(cmd + ["--model", _m("g2")]) == 0
    rep = json.loads(capsys.readouterr().out)
    jsonschema.validate(rep, _schema("report"))
    assert rep["ok"] is True


def test_divisors(capsys):
    assert main(["divisors", "--model", _m("g2"), "--radius", "4", "--scale", "8"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["divisor_separation"]["violations"] == []
    assert rep["scale_separation"]["violations"] == []
    assert rep["partition"]["max_multiplicity"] <= 2


def test_residual_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["residual", "--model", _m("sysA"), "--order", "2", "--c", "3/10",
                 "--jobs", "2", "--out", str(out)]) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["epsilon", "residual", "residual_1"]
    assert [r[0] for r in rows[1:]] == ["1e-2", "10^-2.5", "1e-3", "10^-3.5"]
    assert "slope" in capsys.readouterr().err


def test_exit_codes(tmp_path, monkeypatch):
    assert main(["bogus", "--model", _m("sysA")]) == 2
    assert main(["eta", "--model", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eta", "--model", str(bad)]) == 3
    assert main(["residual", "--model", _m("g2"), "--c", "1/2"]) == 2
    assert main(["eta", "--model", _m("sysA"), "--precision", "32"]) == 2
    res = tmp_path / "res.json"
    res.write_text(json.dumps({"kind": "real", "d": 2, "omega": ["1", "2"], "tau": "2",
                               "gamma0": "1/10",
                               "terms": [{"j": 2, "p": 1, "s": [2, 0], "coeff": "1"}]}))
    assert main(["expand", "--model", str(res), "--order", "1",
                 "--out", str(tmp_path / "t.json")]) == 5
    monkeypatch.setenv("LINDSTEDT_PRECISION_BITS", "16")
    assert main(["eta", "--model", _m("sysA")]) == 2
    monkeypatch.setenv("LINDSTEDT_PRECISION_BITS", "128")
    assert main(["eta", "--model", _m("sysA")]) == 0
