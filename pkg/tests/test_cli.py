import json

import pytest

from intrsm import config as cfgmod
from intrsm.cli import main
from intrsm.errors import ConfigError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_examples(capsys):
    code, out, _ = run(capsys, "classify", "--example", "Ex61", "--theta", "1.5")
    assert code == 0 and out.strip().endswith("regime: AsymptoticallyUltracontractive")
    code, out, _ = run(capsys, "classify", "--example", "Ex63", "--theta", "0.5")
    assert code == 0 and out.strip().endswith("regime: L1OrliczRegime")
    reports = json.loads(out[:out.rindex("regime:")])
    assert {r["condition"] for r in reports} >= {"A1"}


def test_malformed_config_exit_64(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"example": "Ex61", "colour": "blue"}))
    code, out, err = run(capsys, "classify", "--config", str(bad))
    assert code == 64 and out == ""
    msg = json.loads(err)
    assert msg["error"] == "ConfigError" and "colour" in msg["message"]
    bad.write_text("{not json")
    assert run(capsys, "classify", "--config", str(bad))[0] == 64


def test_usage_errors(capsys):
    code, _, err = run(capsys, "nonsense")
    assert code == 64 and json.loads(err)["error"] == "usage"
    assert run(capsys, "rate", "--u-decades", "10-60")[0] == 64
    assert run(capsys, "orlicz", "--phi", "Bogus,1,1")[0] == 64


def test_rate_rows(capsys):
    code, out, _ = run(capsys, "rate", "--example", "Ex61", "--u-decades", "10:60:10")
    assert code == 0 and len(json.loads(out)["rows"]) == 6
    code, out, _ = run(capsys, "rate", "--example", "Ex61", "--format", "csv")
    assert len(out.strip().splitlines()) == 7


def test_orlicz_verdict(capsys):
    code, out, err = run(capsys, "orlicz", "--example", "Ex61", "--phi", "explog,0.01,0.5")
    v = json.loads(out)
    assert code == 0 and v["verdict"] == "MapsInto"
    assert v["threshold_comparison"]["consistent"] is True
    assert "threshold comparison" in err


def test_gamma_json(capsys):
    code, out, _ = run(capsys, "gamma", "--tau", "1", "--x", "10", "--y", "5")
    g = json.loads(out)
    assert code == 0 and set(g) == {"value_log", "ci_halfwidth_log", "method"}
    assert g["method"] == "Quadrature"
    code, _, err = run(capsys, "gamma", "--tau", "0", "--x", "10", "--y", "5")
    assert code == 65 and json.loads(err)["error"] == "DomainError"


def test_verify_tables(capsys):
    code, out, _ = run(capsys, "verify", "--example", "Ex61", "--lemma", "BorderRates")
    tab = json.loads(out)
    assert code == 0 and abs(tab["rows"][-1][1] - 1) <= 0.03
    code, out, _ = run(capsys, "verify", "--example", "Ex63", "--lemma", "L53")
    tab = json.loads(out)
    assert tab["notes"]["b"] == 0.0 and tab["band"][0] == 0.95
    code, out, _ = run(capsys, "verify", "--example", "Ex61", "--lemma", "L42a")
    assert len(json.loads(out)["columns"]) == 4


def test_env_precedence(capsys, monkeypatch, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"example": "Ex61", "potential": {"theta": 0.5}}))
    monkeypatch.setenv("INTRSM_POTENTIAL__THETA", "1.5")
    _, out, _ = run(capsys, "classify", "--config", str(path))
    assert out.strip().endswith("AsymptoticallyUltracontractive")
    _, out, _ = run(capsys, "classify", "--config", str(path), "--theta", "0.5")
    assert out.strip().endswith("L1OrliczRegime")


def test_config_loader(tmp_path):
    cfg = cfgmod.load(None, {"operator": {"family": "RelativisticLaplacian", "m": 2.0},
                             "potential": {"family": "Power", "theta": 0.5}},
                      environ={"INTRSM_T": "2.5", "INTRSM_CONSTANTS__KAPPA": "3"})
    spec, w, name = cfgmod.build(cfg)
    assert name is None and spec.t == 2.5 and spec.kappa == 3 and spec.operator.m == 2.0
    with pytest.raises(ConfigError):
        cfgmod.env_overrides({"INTRSM_NOPE": "1"})
    with pytest.raises(ConfigError):
        cfgmod.load(None, {"potential": {"theta": 1.0}})


def test_mc_reproducible_across_threads(capsys, tmp_path):
    outs = []
    for th in ("1", "3"):
        d = tmp_path / th
        code, out, _ = run(capsys, "mc", "--example", "Ex61", "--experiment", "a2", "--seed", "7",
                           "--paths", "20000", "--threads", th, "--out", str(d))
        assert code == 0
        outs.append((out, (d / "mc_a2.json").read_bytes(), (d / "mc_a2.csv").read_bytes()))
        man = json.loads((d / "manifest.json").read_text())
        assert (d / "mc_a2.csv").read_text().startswith(f"# manifest_hash={man['manifest_hash']}")
    assert outs[0] == outs[1]


def test_examples_bundle(capsys, tmp_path):
    code, out, _ = run(capsys, "examples", "Ex62", "--out", str(tmp_path))
    rep = json.loads(out)["Ex62"]
    assert code == 0
    assert rep["regimes"] == {"0.5": "L1OrliczRegime", "1.5": "L1OrliczRegime"}
    assert rep["criterion_a"]["verdict"] == "MapsInto"
    assert rep["criterion_b"]["verdict"] == "NotSubset"
    assert rep["small_theta_criterion_a"]["note"] == "upper bound not integrable"
    md = (tmp_path / "examples.md").read_text()
    assert "no range information" in md
