import json

import pytest

from ftpl_lab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

PARETO = '{"family": "pareto", "params": {"alpha": 2.0}}'


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_oracle_phi(capsys):
    code, out, _ = run(capsys, "oracle", "phi", "--spec", PARETO, "--gaps", "0,1")
    assert code == EXIT_OK
    vals = json.loads(out)["values"]
    assert vals[0] == pytest.approx(0.8411169166403438, abs=1e-9)


def test_oracle_ratio_checks(capsys):
    code, out, _ = run(capsys, "oracle", "check-lemma4", "--alpha", "2", "--gaps", "0,1,2", "--j", "2")
    assert code == EXIT_OK and json.loads(out)["violation"] == 0.0
    code, out, _ = run(capsys, "oracle", "check-lemma5", "--spec", PARETO, "--gaps", "0,1,2", "--i", "1")
    assert code == EXIT_OK and json.loads(out)["slack"] >= 0


def test_dist_ops(capsys):
    code, out, _ = run(capsys, "dist", "blockmax", "--spec", PARETO, "--k", "3")
    assert code == EXIT_OK and json.loads(out)["closed_form"] == pytest.approx(3.2)
    code, out, _ = run(capsys, "dist", "cdf", "--spec", PARETO, "--x", "2")
    assert json.loads(out)["values"] == [pytest.approx(0.75)]


def test_audit_spec(capsys):
    code, out, err = run(capsys, "audit", "--spec", '{"family": "student_t", "params": {"n": 3.0}}')
    assert code == EXIT_OK
    assert json.loads(out)["verdicts"]["A5"] == "PassAfterTruncShift"
    assert "A5=✗(*)" in err


def test_audit_family_matrix(capsys, tmp_path):
    out_file = tmp_path / "t2.json"
    code, out, _ = run(capsys, "audit", "--table2", "--out", str(out_file))
    assert code == EXIT_OK and "✗(*)" in out
    assert json.loads(out_file.read_text(encoding="utf-8"))["rows"]["A1"] == ["✓"] * 5


def test_run(capsys, tmp_path):
    cfg = {"env": {"kind": "stochastic", "means": [0.25, 0.5]}, "horizon": 256, "trials": 2,
           "policies": [{"kind": "uniform"}], "output_path": str(tmp_path / "out.csv")}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "run", "--config", str(path), "--threads", "1")
    assert code == EXIT_OK
    assert (tmp_path / "out.csv").read_text().startswith("policy,t,mean_regret")
    code, _, _ = run(capsys, "run", "--config", str(path), "--format", "json")
    assert code == EXIT_OK and json.loads((tmp_path / "out.json").read_text())["curves"]


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "run", "--config", str(tmp_path / "missing.json"))[0] == EXIT_CONFIG
    assert run(capsys, "bogus")[0] == EXIT_CONFIG
    assert run(capsys, "oracle", "phi", "--gaps", "0,1")[0] == EXIT_CONFIG
    assert run(capsys, "oracle", "phi", "--spec", PARETO, "--gaps", "0,-1")[0] == EXIT_CONFIG
    assert run(capsys, "dist", "cdf", "--spec", '{"family": "nope"}', "--x", "1")[0] == EXIT_CONFIG
    # an exhausted adversarial matrix is a runtime failure, not a config error
    bad = {"env": {"kind": "adversarial", "matrix": [[0.0, 1.0]]}, "horizon": 5,
           "policies": [{"kind": "uniform"}], "output_path": str(tmp_path / "o.csv")}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert run(capsys, "run", "--config", str(p))[0] == EXIT_RUNTIME
