import hashlib
import json
import subprocess
import sys

import pytest

from incvar.cli import run
from incvar.dataset import read_csv


def _cfg(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def _tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


SWEEP = {"schema": "incvar.sweep/1", "scenario": "contamination_sweep", "eps_grid": [0.0, 0.1],
         "n_nominal": 30, "n_contam": 30, "solver": {"restarts": 2, "max_outer_iters": 15}}


def test_gen_writes_dataset(tmp_path):
    cfg = _cfg(tmp_path, {"schema": "incvar.gen/1", "generator": "perturbed", "k": 3, "n": 50})
    assert run(["gen", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "4"]) == 0
    d = read_csv(tmp_path / "o" / "perturbed.csv")
    assert len(d) == 50 and d.p == 1


def test_fit_writes_report(tmp_path):
    run(["gen", "--config", _cfg(tmp_path, {"schema": "incvar.gen/1", "generator": "nominal",
                                            "n": 40}, "g.json"), "--out", str(tmp_path)])
    cfg = _cfg(tmp_path, {"schema": "incvar.fit/1", "data": "nominal.csv",
                          "model": {"family": "piecewise_affine", "p": 1, "I": 2, "J": 2},
                          "loss": {"kind": "absolute"}, "levels": {"alpha": 0.05, "beta": 0.95},
                          "solver": {"restarts": 2, "max_outer_iters": 20}})
    assert run(["fit", "--config", cfg, "--out", str(tmp_path / "fit")]) == 0
    rep = json.loads((tmp_path / "fit" / "solve_report.json").read_text())
    assert rep["best_objective"] >= 0 and len(rep["traces"]) == 2
    assert rep["best_theta"]["layout"]


def test_prokhorov_identical_clouds_print_zero(tmp_path, capsys):
    run(["gen", "--config", _cfg(tmp_path, {"schema": "incvar.gen/1", "generator": "nominal",
                                            "n": 25}, "g.json"), "--out", str(tmp_path)])
    capsys.readouterr()
    cfg = _cfg(tmp_path, {"schema": "incvar.prokhorov/1", "p": "nominal.csv", "q": "nominal.csv"})
    assert run(["prokhorov", "--config", cfg, "--out", str(tmp_path / "pk")]) == 0
    assert capsys.readouterr().out.strip() == "0"
    assert (tmp_path / "pk" / "certificate.json").exists()


def test_sweep_outputs_and_hash_determinism(tmp_path, monkeypatch):
    cfg = _cfg(tmp_path, SWEEP)
    assert run(["sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("INCVAR_JOBS", "2")
    assert run(["sweep", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("sweep.csv", "sweep.svg", "metadata.json"):
        assert (tmp_path / "a" / name).exists()
    assert len((tmp_path / "a" / "sweep.csv").read_text().splitlines()) == 7
    assert _tree_hash(tmp_path / "a") == _tree_hash(tmp_path / "b")
    assert run(["sweep", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "9"]) == 0
    assert _tree_hash(tmp_path / "a") != _tree_hash(tmp_path / "c")


def test_selftest_exit_zero(capsys):
    assert run(["selftest"]) == 0
    assert "0 failed" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["bogus"], ["gen", "--nope"], [], ["fit"]])
def test_usage_errors_exit_one(argv, capsys):
    assert run(argv) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("patch, field", [
    ({"solver": {"restarts": 0}}, "solver.restarts"),
    ({"eps_grid": "x"}, "eps_grid"),
    ({"bogus": 1}, "bogus"),
    ({"schema": "incvar.sweep/2"}, "schema"),
    ({"levels": {"alpha": 0.05}}, "levels.beta"),
])
def test_schema_violation_reports_field_path(tmp_path, capsys, patch, field):
    cfg = _cfg(tmp_path, {**SWEEP, **patch})
    assert run(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert field in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_semantic_errors_exit_one(tmp_path, capsys):
    cfg = _cfg(tmp_path, {**SWEEP, "levels": {"alpha": 0.9, "beta": 0.2}})
    assert run(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert run(["sweep", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text("{")
    assert run(["sweep", "--config", str(tmp_path / "bad.json")]) == 1


def test_bad_jobs_env(tmp_path, monkeypatch):
    monkeypatch.setenv("INCVAR_JOBS", "many")
    gen = _cfg(tmp_path, {"schema": "incvar.gen/1", "generator": "nominal"})
    assert run(["gen", "--config", gen, "--out", str(tmp_path / "o")]) == 1
    gen = _cfg(tmp_path, {"schema": "incvar.gen/1", "generator": "nominal"}, "g.json")
    assert run(["gen", "--config", gen, "--jobs", "0", "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "incvar.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("incvar ")
