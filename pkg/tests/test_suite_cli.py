import csv
import json

import numpy as np
import pytest

from wcpde.cli import main, run_experiment
from wcpde.errors import ConfigError
from wcpde.suite import CHECKS, default_manifest, load_manifest, run_item, run_suite, validate_manifest, worker_count

SMALL = {
    "seed": 7,
    "checks": [
        {"check": "coupling_analysis", "preset": "example2-gamma0"},
        {"check": "sup_bound", "preset": "ou-scalar", "params": {"n_data": 2, "T": 0.5, "n": 121}},
        {"check": "resolvent_identity", "preset": "example1-d1m2", "params": {"n": 121}},
    ],
}


def test_default_manifest_covers_every_check_and_preset():
    man = default_manifest()
    assert {it["check"] for it in man["checks"]} == set(CHECKS)
    assert {it["preset"] for it in man["checks"]} >= {"example2-gamma0", "decoupled-negative-coupling"}


def test_schema_errors():
    with pytest.raises(ConfigError):
        validate_manifest({"checks": [{"check": "nope", "preset": "ou-scalar"}]})
    with pytest.raises(ConfigError):
        validate_manifest({"checks": [{"check": "comparison", "preset": "example9"}]})
    with pytest.raises(ConfigError):
        validate_manifest({"checks": [], "extra": 1})


def test_empty_manifest(tmp_path):
    summary = run_suite({"checks": []}, tmp_path)
    assert summary.exit_code == 0 and summary.reports == []
    rows = list(csv.reader(open(tmp_path / "suite.csv")))
    assert rows == [["check", "preset", "worst_violation", "tolerance", "verdict"]]


def test_run_item_is_deterministic():
    item = SMALL["checks"][2]
    a = run_item(item, 7, 2)[0]
    b = run_item(item, 7, 2)[0]
    c = run_item(item, 7, 3)[0]
    assert a.worst_violation == b.worst_violation
    assert a.worst_violation != c.worst_violation


def test_errors_are_captured_not_fatal():
    rep = run_item({"check": "comparison", "preset": "ou-scalar", "params": {"n": 10}}, 0, 0)[0]
    assert rep.measured["error"] == "ConfigError"


def test_suite_outputs_and_worker_independence(tmp_path):
    s1 = run_suite(SMALL, tmp_path / "a", workers=1)
    s2 = run_suite(SMALL, tmp_path / "b", workers=2)
    assert s1.all_passed, s1.rows()
    assert (tmp_path / "a" / "suite.csv").read_bytes() == (tmp_path / "b" / "suite.csv").read_bytes()
    index = json.loads((tmp_path / "a" / "index.json").read_text())
    assert index["counts"]["PASS"] == len(s1.reports)
    for item in index["items"]:
        assert (tmp_path / "a" / item["file"]).exists()
        assert item["margin"] >= 0


def test_worker_env(monkeypatch):
    monkeypatch.setenv("WCPDE_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("WCPDE_WORKERS", "many")
    with pytest.raises(ConfigError):
        worker_count()


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "example2-gamma0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "example2-gamma0.json").exists()
    assert main(["validate", "example1-d1m2", "--overrides", '{"gamma_off": 0.5}']) == 1
    assert main(["validate", "example7"]) == 2


def test_cli_verify(tmp_path):
    man = tmp_path / "m.json"
    man.write_text(json.dumps(SMALL))
    assert main(["verify", str(man), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "suite.csv").exists()
    man.write_text(json.dumps({"checks": [{"check": "bogus", "preset": "ou-scalar"}]}))
    assert main(["verify", str(man)]) == 2
    failing = {"checks": [{"check": "sup_bound", "preset": "ou-scalar", "params": {"tol_rel": -1.0, "n": 121}}]}
    man.write_text(json.dumps(failing))
    assert main(["verify", str(man)]) == 1
    assert load_manifest(man)["checks"][0]["check"] == "sup_bound"


def test_cli_evolve(tmp_path):
    spec = {"operator": "ou-scalar", "T": 0.2, "snapshots": [0.1, 0.2], "domain": {"R": 4.0, "n_g": 81},
            "initial": {"kind": "expression", "expr": "x"}, "config": {"dt": 0.01, "theta": 0.5}}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    assert main(["evolve", str(path), "--out", str(tmp_path / "run")]) == 0
    result = json.loads((tmp_path / "run" / "result.json").read_text())
    assert [s["t"] for s in result["snapshots"]] == [0.0, 0.1, 0.2]
    rows = list(csv.reader(open(tmp_path / "run" / "u_002.csv")))
    assert rows[0] == ["component", "x_1", "value"]
    res = run_experiment(spec)
    x = res.final.grid.axis
    inner = np.abs(x) <= 2
    np.testing.assert_allclose(res.final.values[0][inner], (x * np.exp(-0.2))[inner], atol=1e-3)
    path.write_text(json.dumps({"T": 1.0}))
    assert main(["evolve", str(path)]) == 2


def test_cli_resolvent_invariant_decay(tmp_path):
    out = tmp_path / "r"
    assert main(["resolvent", "--preset", "example2-gamma0", "--n", "121", "--theta", "0.5", "--out", str(out)]) == 0
    assert (out / "summary.csv").exists()
    out = tmp_path / "i"
    assert main(["invariant", "--preset", "example2-gamma0", "--n", "241", "--out", str(out)]) == 0
    header = next(csv.reader(open(out / "density.csv")))
    assert header == ["x_1", "mu", "mu_1", "mu_2", "mu_3"]
    out = tmp_path / "d"
    assert main(["decay", "--preset", "heat-scalar", "--pairs", "0,1", "--out", str(out)]) == 0
    assert next(csv.reader(open(out / "decay.csv"))) == ["label", "lag", "norm", "normalized"]
    assert main(["decay", "--preset", "heat-scalar", "--pairs", "0-1"]) == 2
