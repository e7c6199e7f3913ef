import csv
import io
import json
import math

import pytest

from hubtail.cli import main

from reference import ETA_P21


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_constants_json(capsys):
    code, out, _ = run(capsys, "constants", "--dist", "pareto:alpha=2,xmin=1", "--a", "3", "--trials", "1000000", "--seed", "1")
    assert code == 0
    doc = json.loads(out)
    for key in ("schema_version", "dist", "a", "mu", "k", "eta", "K_hat", "K_stderr", "trials", "seed", "config"):
        assert key in doc
    assert doc["k"] == 2 and doc["mu"] == 2.0
    assert abs(doc["eta"] - 0.585786) < 1e-6 and abs(doc["eta"] - ETA_P21) < 1e-9
    assert doc["config"]["a"] == 3.0 and doc["config"]["seed"] == 1
    assert "workers" not in doc["config"]


def test_exit_codes(capsys):
    code, _, err = run(capsys, "constants", "--a", "4", "--trials", "10")
    assert code == 2 and "integer" in err
    assert run(capsys, "constants")[0] == 1
    assert run(capsys, "estimate", "--n", "100", "--a", "1", "--eps", "nope")[0] == 1
    assert run(capsys, "estimate", "--n", "100", "--a", "1", "--eps", "0.9", "--trials", "10")[0] == 2
    assert run(capsys, "constants", "--dist", "lognormal:s=1", "--a", "3")[0] == 2
    assert run(capsys, "frobnicate")[0] == 1
    code, out, _ = run(capsys, "oracle", "--check", "all")
    assert code == 0 and out.count("PASS") == 5


def test_oracle_failure_exit_code(capsys, monkeypatch):
    from hubtail import cli
    from hubtail.oracle import CheckResult

    monkeypatch.setattr(cli, "run_checks", lambda which, seed: [CheckResult("x", False, "broken")])
    code, out, _ = run(capsys, "oracle")
    assert code == 3 and "FAIL x" in out


def _csv_body(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_simulate_csv(capsys):
    code, out, _ = run(capsys, "simulate", "--n", "60", "--trials", "5", "--seed", "7", "--eps", "0.29")
    assert code == 0
    assert out.startswith("# ")
    rows = _csv_body(out)
    assert list(rows[0]) == ["trial", "S_n", "M_n", "E_n", "N_eps", "top1", "top2"]
    assert len(rows) == 5
    for r in rows:
        assert float(r["M_n"]) == pytest.approx(float(r["S_n"]) / (2.0 * 60), rel=1e-15)
        assert 0 <= int(r["E_n"]) <= 60 * 59 // 2
        assert float(r["top1"]) >= float(r["top2"])
    code, js, _ = run(capsys, "simulate", "--n", "60", "--trials", "5", "--seed", "7", "--eps", "0.29", "--emit", "json")
    doc = json.loads(js)
    assert [row["S_n"] for row in doc["rows"]] == [float(r["S_n"]) for r in rows]
    assert run(capsys, "simulate", "--n", "60", "--trials", "2")[0] == 1  # eps auto needs --a


def test_estimate_json(capsys):
    code, out, _ = run(capsys, "estimate", "--n", "300", "--a", "1", "--trials", "2000", "--method", "both", "--total")
    assert code == 0
    doc = json.loads(out)
    assert set(doc["estimates"]) == {"naive", "planted"}
    assert "agreement_z" in doc
    planted = doc["estimates"]["planted"]
    assert planted["method"] == "planted+total"
    assert planted["ci95"][0] <= planted["p_hat"] <= planted["ci95"][1]
    assert doc["config"]["total"] is True


def test_estimate_en(capsys):
    code, out, _ = run(capsys, "estimate", "--target", "en", "--n", "200", "--a", "0.5", "--trials", "300")
    doc = json.loads(out)
    assert code == 0
    est = doc["estimates"]["planted"]
    assert "mn_p_hat" in est["extra"] and "ratio" in est["extra"]


def test_convergence_csv_header(capsys):
    code, out, _ = run(capsys, "convergence", "--n", "100,200", "--a", "1", "--trials", "2000", "--k-trials", "10000")
    assert code == 0
    header = [ln for ln in out.splitlines() if not ln.startswith("#")][0]
    assert header == "n,p_hat,stderr,asymptote,ratio,ratio_err"
    rows = _csv_body(out)
    assert [int(r["n"]) for r in rows] == [100, 200]


def test_convergence_flags_degenerate(capsys):
    code, out, err = run(
        capsys, "convergence", "--dist", "grid:values=1,3;probs=0.5,0.5", "--n", "50", "--a", "1", "--eps", "0.01", "--trials", "100"
    )
    assert code == 0 and "undefined" in err
    assert math.isnan(float(_csv_body(out)[0]["ratio"]))


def test_hublaw_outputs(capsys):
    argv = ["hublaw", "--n", "300", "--a", "1", "--trials", "3000", "--limit-trials", "500", "--seed", "3"]
    code, out, _ = run(capsys, *argv)
    assert code == 0
    rows = _csv_body(out)
    assert {r["source"] for r in rows} == {"empirical", "limit"}
    assert any(ln.startswith("# ks:") for ln in out.splitlines())
    code, js, _ = run(capsys, *argv, "--output", "json")
    doc = json.loads(js)
    assert doc["k"] == 1 and len(doc["ks"]) == 1 and 0 <= doc["ks"][0] <= 1
    assert len(doc["limit"]) == 500


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"a": 3, "trials": 5000, "seed": 9}))
    code, out, _ = run(capsys, "--config", str(cfg), "constants")
    assert code == 0
    doc = json.loads(out)
    assert (doc["a"], doc["trials"], doc["seed"]) == (3.0, 5000, 9)
    code, out, _ = run(capsys, "--config", str(cfg), "constants", "--seed", "10")
    assert json.loads(out)["seed"] == 10
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert run(capsys, "--config", str(bad), "constants")[0] == 1


def test_out_file_matches_stdout(capsys, tmp_path):
    argv = ["estimate", "--n", "200", "--a", "1", "--trials", "500"]
    _, out, _ = run(capsys, *argv)
    target = tmp_path / "est.json"
    assert run(capsys, *argv, "--out", str(target))[0] == 0
    assert target.read_text() == out


@pytest.mark.parametrize(
    "argv",
    [
        ["estimate", "--n", "300", "--a", "1", "--trials", "3000", "--batch", "250", "--total"],
        ["estimate", "--target", "en", "--n", "150", "--a", "0.5", "--trials", "600", "--batch", "100"],
        ["constants", "--a", "3", "--trials", "200000", "--batch", "8192"],
    ],
)
def test_workers_do_not_change_output(capsys, argv):
    _, one, _ = run(capsys, *argv, "--workers", "1")
    _, eight, _ = run(capsys, *argv, "--workers", "8")
    assert one == eight


def test_json_is_finite_safe(capsys):
    # a zero estimate yields a NaN ratio internally; JSON must carry null, not NaN
    code, out, _ = run(
        capsys, "estimate", "--target", "en", "--dist", "grid:values=1,2;probs=0.5,0.5", "--n", "50", "--a", "1", "--eps", "0.1", "--trials", "50"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["estimates"]["planted"]["extra"]["ratio"] is None
    assert "NaN" not in out
