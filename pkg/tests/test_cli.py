import json

import pytest

from maxclades.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_exact_table(capsys):
    code, out, err = run(capsys, "exact", "--nmax", "4")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "n,mu,nu,psi,var_G,N,var_Gprime"
    row = lines[4].split(",")
    assert row[0] == "4" and float(row[1]) == pytest.approx(-1 / 6) and float(row[2]) == 1.5
    assert json.loads(err.splitlines()[0])["config"]["nmax"] == 4


def test_constants(capsys):
    code, out, _ = run(capsys, "constants", "--nmax", "1000000", "--format", "json")
    doc = json.loads(out)
    c = {k: float(v) for k, v in doc["constants"].items()}
    assert c["alpha_closed"] == pytest.approx(0.21616617919, abs=1e-11)
    assert c["alpha_series_error"] < 2e-5
    assert doc["meta"]["config"]["lambda"] == 2.0


def test_dist(capsys):
    code, out, _ = run(capsys, "dist", "--cap", "8", "--p", "2.5")
    lines = out.splitlines()
    assert lines[0] == "n,mean,variance,m3,m4,p_single,abs_2.5,sum_f_abs_2.5"
    row = lines[3].split(",")
    assert float(row[2]) == pytest.approx(2 / 9) and float(row[5]) == pytest.approx(2 / 3)


def test_simulate_is_reproducible(capsys, tmp_path):
    argv = ["simulate", "--n", "100", "--samples", "1000", "--seed", "7", "--threads", "1"]
    _, first, err = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second
    out = tmp_path / "s.csv"
    assert run(capsys, *argv, "--out", str(out))[0] == 0
    assert out.read_text() == first
    assert [p.name for p in tmp_path.iterdir()] == ["s.csv"]
    cfg = json.loads(err.splitlines()[0])["config"]
    assert cfg["N"] == 10 and cfg["K"] == 20


def test_simulate_json_and_raw(capsys):
    code, out, _ = run(capsys, "simulate", "--n", "40", "--samples", "50", "--format", "json",
                       "--chain-depth", "2", "--cutoff", "5")
    doc = json.loads(out)
    assert doc["meta"]["config"]["N"] == 5
    names = [f["functional"] for f in doc["functionals"]]
    assert "F_2" in names and "F_3" not in names
    code, out, _ = run(capsys, "simulate", "--n", "40", "--samples", "50", "--raw", "XN")
    assert code == 0 and out.splitlines()[0] == "XN" and len(out.splitlines()) == 51


def test_simulate_clock(capsys):
    code, out, _ = run(capsys, "simulate", "--model", "ct-clock", "--lambda", "2",
                       "--samples", "200", "--chain-depth", "2")
    assert code == 0 and "size," in out


@pytest.mark.parametrize("argv", [
    ["simulate", "--bogus"],
    ["simulate"],
    ["simulate", "--n", "10", "--cutoff", "abc"],
    ["simulate", "--n", "10", "--model", "yule"],
    ["simulate", "--n", "10", "--samples", "0"],
    ["simulate", "--n", "10", "--raw", "nothing"],
    ["dist", "--cap", "600"],
    ["constants", "--lambda", "-1"],
    [],
])
def test_usage_errors(capsys, argv):
    with pytest.raises(SystemExit) as info:
        code = main(argv)
        raise SystemExit(code)
    assert info.value.code == 2


def test_verify_quick_subset(capsys, monkeypatch):
    import maxclades.verify as verify

    real = verify.run_all
    monkeypatch.setattr(verify, "run_all", lambda **kw: real(only={1, 5, 9}, **kw))
    code, out, _ = run(capsys, "verify", "--quick")
    assert code == 0
    assert out.count("[PASS]") == 3 and "3/3 criteria passed" in out


def test_verify_reports_failure(capsys, monkeypatch):
    import maxclades.verify as verify

    failing = verify.CheckResult(99, "forced", False, "always fails")
    monkeypatch.setattr(verify, "run_all", lambda **kw: [kw["report"](failing) or failing])
    code, out, _ = run(capsys, "verify", "--quick")
    assert code == 1 and "[FAIL]" in out
