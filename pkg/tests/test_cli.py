import json
import shutil
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from conftest import FIXTURES

from coneglm.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main
from coneglm.conic import ConicProgram
from coneglm.fit import FitResult
from coneglm.mi import solve_mi

CAES = str(FIXTURES / "caesarian.csv")
CAES_ARGS = ["--data", CAES, "--formula", "cbind(n1, n0) ~ RISK + NPLAN + ANTIB", "--family", "binomial",
             "--link", "log"]


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_fit_text_report(capsys):
    assert main(["fit", *CAES_ARGS]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Null Deviance:      83.49" in out
    assert "AIC: 31.49" in out


def test_fit_json_reloads_with_exact_aic(tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", *CAES_ARGS, "--format", "json", "--out", str(out)]) == EXIT_OK
    fit = FitResult.from_json(out.read_text())
    assert fit.recomputed_aic() == fit.aic
    assert fit.status == "optimal"


def test_dry_run_program_solves_to_fit_objective(tmp_path):
    cons = tmp_path / "c.json"
    cons.write_text(json.dumps([{"type": "k_max", "k": 2}]))
    prog_path, fit_path = tmp_path / "p.json", tmp_path / "f.json"
    assert main(["fit", *CAES_ARGS, "--constraints", str(cons), "--dry-run", "--out", str(prog_path)]) == 0
    assert main(["fit", *CAES_ARGS, "--constraints", str(cons), "--format", "json", "--out", str(fit_path)]) == 0
    sol = solve_mi(ConicProgram.from_json(prog_path.read_text()))
    fit = FitResult.from_json(fit_path.read_text())
    assert sol.objective_value == pytest.approx(fit.objective, abs=1e-6)


@pytest.mark.parametrize("argv", [
    ["fit", "--data", "does-not-exist.csv", "--formula", "y ~ x"],
    ["fit", "--data", CAES, "--formula", "cbind(n1, n0) ~ RISK +"],
    ["fit", "--data", CAES, "--formula", "cbind(n1, n0) ~ nope", "--family", "binomial"],
])
def test_input_errors_exit_1_with_json_line(argv, capsys):
    assert main(argv) == EXIT_INPUT
    err = _stderr_json(capsys)
    assert err["error"] == "input" and err["message"]


def test_bad_constraint_file_is_input_error(tmp_path, capsys):
    cons = tmp_path / "c.json"
    cons.write_text(json.dumps([{"type": "k_max", "k": -3}]))
    assert main(["fit", *CAES_ARGS, "--constraints", str(cons)]) == EXIT_INPUT
    assert _stderr_json(capsys)["error"] == "input"


def test_infeasible_exit_code(tmp_path):
    cons = tmp_path / "c.json"
    cons.write_text(json.dumps([
        {"type": "linear", "L": [[1.0, 1.0]], "columns": ["RISK", "NPLAN"], "dir": "==", "rhs": 1.0},
        {"type": "k_max", "k": 0},
    ]))
    assert main(["fit", *CAES_ARGS, "--constraints", str(cons)]) == EXIT_INFEASIBLE


def test_seq_text_table(capsys):
    assert main(["seq", *CAES_ARGS, "--k", "1,2"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split()[:3] == ["k_max", "aic", "bic"]
    assert len(lines) == 3


def test_agg_writes_counts(tmp_path, capsys):
    t = pd.DataFrame({"y": [1, 0, 1, 1, 0], "g": ["a", "a", "b", "b", "b"]})
    path = tmp_path / "raw.csv"
    t.to_csv(path, index=False)
    assert main(["agg", "--data", str(path), "--formula", "y ~ g"]) == EXIT_OK
    out = pd.read_csv(pd.io.common.StringIO(capsys.readouterr().out))
    assert out.to_dict("list") == {"success": [1, 2], "failure": [1, 1], "g": ["a", "b"]}


def test_fair_sweep_bounds_hold(tmp_path, rng):
    n = 300
    w = (rng.random(n) < 0.4).astype(int)
    x1 = rng.normal(size=n) + 0.8 * w
    x2 = rng.normal(size=n)
    y = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + x1 - 0.7 * x2)))).astype(int)
    path = tmp_path / "d.csv"
    pd.DataFrame({"y": y, "x1": x1, "x2": x2, "w": w}).to_csv(path, index=False)
    out = tmp_path / "sweep.json"
    code = main(["fair-sweep", "--data", str(path), "--formula", "y ~ x1 + x2", "--family", "binomial",
                 "--sensitive", "w", "--alphas", "0,0.5,1", "--format", "json", "--out", str(out)])
    assert code == EXIT_OK
    rows = json.loads(out.read_text())
    assert [r["alpha"] for r in rows] == [0.0, 0.5, 1.0]
    for r in rows:
        assert r["status"] == "optimal"
        assert abs(r["covariance"][0]) <= r["bounds"][0] + 1e-6
        assert 0.0 <= r["accuracy"] <= 1.0
    assert rows[2]["bounds"][0] > 0


def test_fair_sweep_rejects_unknown_sensitive_column(capsys):
    assert main(["fair-sweep", *CAES_ARGS, "--sensitive", "zz"]) == EXIT_INPUT
    assert "zz" in _stderr_json(capsys)["message"]


def test_backend_env_override(monkeypatch, tmp_path):
    out = tmp_path / "fit.json"
    monkeypatch.setenv("CONEGLM_BACKEND", "no-such-solver")
    code = main(["fit", *CAES_ARGS, "--backend", "clarabel", "--out", str(out)])
    assert code != EXIT_OK
    monkeypatch.setenv("CONEGLM_BACKEND", "clarabel")
    assert main(["fit", *CAES_ARGS, "--backend", "no-such-solver", "--out", str(out)]) == EXIT_OK


def test_module_entry_point():
    exe = shutil.which("coneglm")
    cmd = [exe] if exe else [sys.executable, "-m", "coneglm"]
    res = subprocess.run([*cmd, "fit", *CAES_ARGS, "--format", "json"], capture_output=True, text=True,
                         timeout=120)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["status"] == "optimal"
