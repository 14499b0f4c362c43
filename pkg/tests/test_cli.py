import json
import subprocess
import sys

import pytest

from sensorgame.cli import main

from conftest import TABLE1


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_steady_state(capsys):
    code, out, _ = run_cli(capsys, "steady-state", TABLE1, "--json")
    assert code == 0
    rows = json.loads(out)["sensors"]
    assert [r["sensor"] for r in rows] == [1, 2, 3]
    assert rows[0]["trace"] == pytest.approx(0.4779258298, abs=1e-9)
    assert all(r["residual"] <= 1e-12 for r in rows)


def test_equilibrium_constrained_ne(capsys):
    code, out, _ = run_cli(capsys, "equilibrium", TABLE1, "--kind", "ne", "--constrained", "--json")
    assert code == 0
    profile = json.loads(out)["profile"]
    for row in profile:
        assert row["probabilities"] == [0.5, 0.5]


def test_equilibrium_constrained_ce(capsys):
    code, out, _ = run_cli(capsys, "equilibrium", TABLE1, "--kind", "ce", "--constrained", "--json")
    data = json.loads(out)
    assert code == 0 and data["beta"] == [0.25] * 3 and data["alpha"] == [1.0] * 3


def test_equilibrium_unconstrained(capsys):
    code, out, _ = run_cli(capsys, "equilibrium", TABLE1, "--kind", "ce", "--json")
    assert json.loads(out)["support"] == [{"action": [1.0, 0.8, 0.6], "probability": 1.0}]
    code, out, _ = run_cli(capsys, "equilibrium", TABLE1, "--kind", "ne")
    assert code == 0 and "s(1)=1" in out


def test_verify(capsys):
    code, out, _ = run_cli(capsys, "verify", TABLE1, "--kind", "ce", "--constrained", "--lp", "--json")
    data = json.loads(out)
    assert code == 0 and data["passed"]
    assert data["reports"]["override_ce"]["is_equilibrium"]
    code, out, _ = run_cli(capsys, "verify", TABLE1, "--kind", "ne")
    assert code == 0 and "PASS" in out


def test_simulate(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "simulate", TABLE1, "--runs", 50, "--seed", 3, "--horizon", 4, "--out", tmp_path)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ce.csv", "ce_closed_form.csv", "ne.csv", "summary.json"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["runs"] == 50 and summary["config"]["seed"] == 3


def test_error_exit_codes(capsys, tmp_path):
    code, _, err = run_cli(capsys, "steady-state", tmp_path / "missing.json")
    assert code == 2 and "ConfigError" in err
    cfg = json.loads(TABLE1.read_text())
    cfg["energy_caps"] = None
    path = tmp_path / "free.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run_cli(capsys, "equilibrium", path, "--kind", "ne", "--constrained")
    assert code == 2 and "energy_caps" in err
    cfg["processes"][0] = {"A": [[1.5, 0], [0, 0.5]], "C": [[0, 1]], "Q": [[1, 0], [0, 1]], "R": 1}
    path.write_text(json.dumps(cfg))
    code, _, err = run_cli(capsys, "steady-state", path)
    assert code == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sensorgame", "equilibrium", str(TABLE1), "--kind", "ne", "--constrained"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sensor 3: s(0)=0.5, s(0.6)=0.5" in proc.stdout
