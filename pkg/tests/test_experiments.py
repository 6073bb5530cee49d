import numpy as np
import pytest

from incvar.exceptions import ConfigError, DomainError
from incvar.experiments import (CSV_HEADER, PA_SPEC, THETA_TRUE, ScenarioConfig, derive_seed,
                                emit, gen_contamination, gen_nominal, gen_perturbed,
                                gen_perturbed_coupled, run_sweep, sweep_csv, tbar)
from incvar.models import ModelSpec, ParamVector, predict_many
from incvar.riskcore import TrimLevels
from incvar.solver import SolveConfig

FAST = SolveConfig(restarts=2, max_outer_iters=20)


def test_nominal_generator():
    d = gen_nominal(seed=1)
    assert len(d) == 200 and np.all(d.weights == 1 / 200)
    clean = gen_nominal(seed=1, noise_sigma=0.0)
    assert np.allclose(clean.y, predict_many(PA_SPEC, THETA_TRUE, clean.X))
    assert predict_many(PA_SPEC, THETA_TRUE, np.array([[0.0]]))[0] == -2.0
    assert np.array_equal(gen_nominal(7).points(), gen_nominal(7).points())
    assert not np.array_equal(gen_nominal(7).points(), gen_nominal(8).points())


def test_contamination_generator():
    d = gen_contamination(seed=2)
    assert len(d) == 200
    x = d.X[:, 0]
    ref = np.maximum(100 * x + 200, 300 * x - 400) - np.maximum(200 * x - 100, 400 * x + 100)
    assert np.all(np.abs(d.y - ref) < 0.05 * 6)
    clean = gen_contamination(seed=2, noise_sigma=0.0)
    zero = np.maximum(200, -400) - np.maximum(-100, 100)
    assert zero == 100 and np.allclose(clean.y, ref)
    assert np.array_equal(gen_contamination(3).points(), gen_contamination(3).points())


def test_perturbed_generator():
    for k in (1, 2, 10):
        d = gen_perturbed(k, seed=3)
        assert len(d) == 1000
    with pytest.raises(DomainError):
        gen_perturbed(0, seed=1)
    with pytest.raises(DomainError):
        gen_perturbed(2.5, seed=1)
    # without noise, every point lies within 1/k of the nominal curve or the outlier grid
    k = 4
    d = gen_perturbed(k, seed=9, noise_sigma=0.0)
    x, y = d.X[:, 0], d.y
    grid = 10.0 * np.arange(200)
    gy = k * (np.maximum(grid + 2, 3 * grid - 4) - np.maximum(2 * grid - 1, 4 * grid + 1))
    near_grid = np.min(np.hypot(x[:, None] - grid, y[:, None] - gy), axis=1) <= 1 / k + 1e-9
    xs = x[:, None] + np.linspace(-1 / k, 1 / k, 401)
    curve = predict_many(PA_SPEC, THETA_TRUE, xs.reshape(-1, 1)).reshape(xs.shape)
    near_curve = np.min(np.hypot(xs - x[:, None], curve - y[:, None]), axis=1) <= 1 / k + 1e-6
    assert np.all(near_grid | near_curve)
    assert 0.1 < np.mean(near_grid & ~near_curve) < 0.4


def test_tbar():
    lin = ModelSpec("linear", p=1)
    assert tbar(lin, ParamVector([0.0, 1.0], lin)) == 0.0
    assert tbar(lin, ParamVector([0.0, 0.0], lin)) == -12.0
    x = -100 + 0.1 * np.arange(2000)
    ref = np.mean(np.log10(np.maximum(np.abs(x), 1e-12)))
    assert tbar(lin, ParamVector([1.0, 0.0], lin)) == pytest.approx(ref, rel=1e-13)
    assert np.isfinite(tbar(PA_SPEC, THETA_TRUE))


def test_config_validation():
    with pytest.raises(ConfigError, match="eps_grid"):
        ScenarioConfig("contamination_sweep", ())
    with pytest.raises(ConfigError, match="eps_grid"):
        ScenarioConfig("contamination_sweep", (0.1, 0.0))
    with pytest.raises(ConfigError, match="k_grid"):
        ScenarioConfig("perturbation_sweep", (0.5,))
    with pytest.raises(ConfigError, match="beta_grid"):
        ScenarioConfig("level_sweep_beta", (0.01, 0.5))
    with pytest.raises(ConfigError, match="scenario"):
        ScenarioConfig("nope", (1,))
    with pytest.raises(ConfigError, match="estimators"):
        ScenarioConfig("contamination_sweep", (0.0,), estimators=("ols",))
    with pytest.raises(ConfigError, match="noise_sigma"):
        ScenarioConfig("contamination_sweep", (0.0,), noise_sigma=-1)


def test_seed_derivation():
    assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)
    assert 0 <= derive_seed(123, "x") < 2**63


def test_small_sweep_rows_and_determinism(tmp_path):
    cfg = ScenarioConfig("contamination_sweep", (0.0, 0.1), solver=FAST, master_seed=3,
                         n_nominal=40, n_contam=40)
    a, b = run_sweep(cfg), run_sweep(cfg)
    assert len(a.rows) == 6
    assert [(r.grid_value, r.estimator) for r in a.rows] == [
        (0.0, "incvar"), (0.0, "expectation"), (0.0, "cvar"),
        (0.1, "incvar"), (0.1, "expectation"), (0.1, "cvar")]
    assert all(np.isfinite(r.tbar) for r in a.rows)
    assert sweep_csv(a) == sweep_csv(b)
    emit(a, tmp_path / "s.csv", tmp_path / "s.svg")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 7
    fields = lines[1].split(",")
    assert fields[:4] == ["contamination_sweep", "eps", "0", "incvar"] and fields[7] == ""
    svg = (tmp_path / "s.svg").read_text()
    assert svg.count("<polyline") == 3 and "<script" not in svg and "@import" not in svg
    timed = sweep_csv(a, record_seconds=True).splitlines()[1].split(",")
    assert float(timed[7]) > 0


def test_parallel_sweep_matches_serial():
    cfg = ScenarioConfig("perturbation_sweep", (2, 3), solver=FAST, n_perturbed=60,
                         estimators=("incvar", "cvar"))
    assert sweep_csv(run_sweep(cfg)) == sweep_csv(run_sweep(cfg, n_jobs=2))


def test_level_sweeps_use_fixed_contamination():
    cfg = ScenarioConfig("level_sweep_alpha", (0.0, 0.5), levels=TrimLevels(0.05, 0.94),
                         solver=FAST, estimators=("incvar",), n_nominal=30, n_contam=30)
    assert cfg.levels_at(0.5) == TrimLevels(0.5, 0.94)
    res = run_sweep(cfg)
    assert len(res.rows) == 2 and res.metadata["config"]["contamination"] == 0.05
    beta = ScenarioConfig("level_sweep_beta", (0.9, 1.0), solver=FAST)
    assert beta.levels_at(1.0) == TrimLevels(0.05, 1.0)


def test_coupled_perturbation_shift_bound():
    k = 5
    pert, nom = gen_perturbed_coupled(k, seed=11, n=400)
    assert np.array_equal(pert.points(), gen_perturbed(k, seed=11, n=400).points())
    shift = np.linalg.norm(pert.points() - nom.points(), axis=1)
    moved = shift > 1 / k + 1e-12
    assert 0.1 < moved.mean() < 0.3
    assert np.all(pert.X[moved, 0] > -1)  # only outlier-grid draws move far
