import numpy as np
import pytest

from incvar.dataset import DataSet
from incvar.exceptions import ConfigError, NumericalFailure, UnsupportedCombinationError
from incvar.losses import LossSpec
from incvar.models import ModelSpec, ParamVector, piecewise_affine_params, predict_many
from incvar.riskcore import TrimLevels
from incvar.solver import (SolveConfig, dca_decomposition, fit_incvar, initial_point,
                           objective)

LIN = ModelSpec("linear", p=1)
PA = ModelSpec("piecewise_affine", p=1, I=2, J=2)
ABS, SQ = LossSpec("absolute"), LossSpec("squared")


def test_objective_examples():
    data = DataSet(np.zeros(5), [1.0, -2.0, 3.0, -4.0, 5.0])
    zero = ParamVector([0.0, 0.0], LIN)
    assert objective(data, LIN, ABS, TrimLevels(0.2, 0.8), zero) == pytest.approx(3.0)
    assert objective(data, LIN, ABS, TrimLevels(0, 1), zero) == pytest.approx(3.0)
    w = np.array([0.1, 0.2, 0.3, 0.2, 0.2])
    wd = DataSet(np.zeros(5), [1.0, -2.0, 3.0, -4.0, 5.0], w)
    assert objective(wd, LIN, SQ, TrimLevels(0, 1), zero) == pytest.approx(
        w @ np.array([1, 4, 9, 16, 25]))
    x = np.linspace(-1, 1, 7)
    exact = DataSet(x, 2 * x + 1)
    assert objective(exact, LIN, SQ, TrimLevels(0.3, 0.6), ParamVector([2, 1], LIN)) == 0.0


def _random_pa_problem(rng, n=60):
    X = rng.normal(0, 2, n)
    y = rng.normal(0, 3, n)
    return DataSet(X, y, rng.dirichlet(np.ones(n)))


def test_decomposition_identity_and_minorant(rng):
    for _ in range(20):
        data = _random_pa_problem(rng)
        a, b = np.sort(rng.uniform(0, 1, 2))
        lv = TrimLevels(a, b)
        theta = ParamVector(rng.standard_normal(8), PA)
        u, v, minor = dca_decomposition(data, PA, ABS, lv, theta)
        obj = objective(data, PA, ABS, lv, theta)
        assert abs(u - v - obj) <= 1e-10 * (1 + obj)
        assert minor(theta) == pytest.approx(v, abs=1e-12)
        for _ in range(100):
            tp = ParamVector(theta.data + rng.normal(0, 1.5, 8), PA)
            _, vp, _ = dca_decomposition(data, PA, ABS, lv, tp)
            assert vp >= minor(tp) - 1e-8


def test_decomposition_no_trimming(rng):
    data = _random_pa_problem(rng)
    theta = ParamVector(rng.standard_normal(8), PA)
    u, v, _ = dca_decomposition(data, PA, ABS, TrimLevels(0, 1), theta)
    resid = np.abs(predict_many(PA, theta, data.X) - data.y)
    assert u - v == pytest.approx(data.weights @ resid, rel=1e-12)
    G = theta.data.reshape(4, 2)
    Z = np.column_stack([data.X[:, 0], np.ones(len(data))])
    psi = (Z @ G[:2].T).max(1) + (Z @ G[2:].T).max(1)
    assert v == pytest.approx(data.weights @ psi, rel=1e-12, abs=1e-12)


def test_unsupported_combination():
    data = DataSet([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(UnsupportedCombinationError):
        fit_incvar(data, PA, SQ, TrimLevels(0, 1), SolveConfig(restarts=1))
    with pytest.raises(UnsupportedCombinationError):
        fit_incvar(data, ModelSpec("exponential", p=1), ABS, TrimLevels(0, 1))


@pytest.mark.parametrize("kwargs", [{"restarts": 0}, {"outer_tol": 0.0}, {"inner_tol": -1},
                                    {"max_outer_iters": 0}, {"smoothing_eps": -1.0},
                                    {"init_scale": np.inf}, {"restarts": 1.5}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SolveConfig(**kwargs)


def test_degenerate_levels_rejected():
    data = DataSet([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ConfigError):
        fit_incvar(data, LIN, ABS, TrimLevels(0.5, 0.5 + 1e-12))


def test_least_squares_oracle(rng):
    X = rng.normal(0, 1, (80, 2))
    y = X @ [1.5, -0.7] + 0.3 + rng.normal(0, 0.5, 80)
    w = rng.dirichlet(np.ones(80))
    spec = ModelSpec("linear", p=2)
    rep = fit_incvar(DataSet(X, y, w), spec, SQ, TrimLevels(0, 1), SolveConfig(restarts=3))
    A = np.column_stack([X, np.ones(80)]) * np.sqrt(w)[:, None]
    ref = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)[0]
    assert np.allclose(rep.best_theta.data, ref, atol=1e-6)
    ref_obj = w @ (np.column_stack([X, np.ones(80)]) @ ref - y) ** 2
    assert rep.best_objective == pytest.approx(ref_obj, abs=1e-6)


def test_interpolable_piecewise_affine(rng):
    truth = piecewise_affine_params(PA, [-1, 0], [1, -2], [-1, -2], [3, 2])
    X = rng.normal(0, 1.5, 100)
    data = DataSet(X, predict_many(PA, truth, X[:, None]))
    rep = fit_incvar(data, PA, ABS, TrimLevels(0.05, 0.95), SolveConfig(restarts=20, seed=3))
    assert rep.best_objective <= 1e-6
    for tr in rep.traces:
        assert all(b <= a + 1e-8 for a, b in zip(tr, tr[1:]))
    assert rep.best_objective == pytest.approx(
        objective(data, PA, ABS, TrimLevels(0.05, 0.95), rep.best_theta), abs=1e-9)
    assert rep.termination in ("tol_reached", "max_iters")
    assert len(rep.traces) == 20 and 0 <= rep.restart_index_of_best < 20


def test_single_point():
    data = DataSet([[0.7]], [2.0])
    for spec, loss in [(LIN, ABS), (LIN, SQ), (PA, ABS)]:
        rep = fit_incvar(data, spec, loss, TrimLevels(0, 1), SolveConfig(restarts=2))
        assert rep.best_objective <= 1e-6


def test_smoothing_off_uses_subgradient(rng):
    X = rng.normal(0, 1, 40)
    data = DataSet(X, 2 * X - 1 + rng.normal(0, 0.1, 40))
    rep = fit_incvar(data, LIN, ABS, TrimLevels(0.1, 0.9),
                     SolveConfig(restarts=2, smoothing_eps=0.0, inner_max_iters=50))
    for tr in rep.traces:
        assert all(b <= a + 1e-8 for a, b in zip(tr, tr[1:]))
    assert rep.best_objective < objective(data, LIN, ABS, TrimLevels(0.1, 0.9),
                                          ParamVector([0.0, 0.0], LIN))


def test_trimming_insensitivity(rng):
    n = 100
    X = rng.normal(0, 1, n)
    y = 2 * X + 1 + rng.normal(0, 0.1, n)
    clean = DataSet(X, y)
    yb = y.copy()
    yb[:3] = 1e6 * rng.choice([-1, 1], 3)
    dirty = DataSet(X, yb)
    cfg = SolveConfig(restarts=3)
    lv = TrimLevels(0.05, 0.95)
    c = fit_incvar(clean, LIN, ABS, lv, cfg).best_objective
    d = fit_incvar(dirty, LIN, ABS, lv, cfg).best_objective
    assert d <= 10 * c
    mean_c = fit_incvar(clean, LIN, ABS, TrimLevels(0, 1), cfg).best_objective
    mean_d = fit_incvar(dirty, LIN, ABS, TrimLevels(0, 1), cfg).best_objective
    assert mean_d >= 1e3 * mean_c


def test_scale_equivariance(rng):
    X = rng.normal(0, 1, 60)
    y = 0.5 * X - 2 + rng.standard_t(3, 60)
    lv = TrimLevels(0.1, 0.9)
    base = fit_incvar(DataSet(X, y), LIN, ABS, lv, SolveConfig(restarts=4, seed=7))
    lam = 7.5
    scaled = fit_incvar(DataSet(X, lam * y), LIN, ABS, lv,
                        SolveConfig(restarts=4, seed=7, init_scale=lam))
    assert scaled.best_objective == pytest.approx(lam * base.best_objective, rel=1e-5)
    assert np.allclose(initial_point(LIN, SolveConfig(seed=7, init_scale=lam), 2),
                       lam * initial_point(LIN, SolveConfig(seed=7), 2))


def test_restart_streams_are_independent_of_count():
    a = [initial_point(PA, SolveConfig(seed=11), r) for r in range(3)]
    b = [initial_point(PA, SolveConfig(seed=11, restarts=50), r) for r in range(3)]
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    assert all(np.linalg.norm(u) <= 1.0 for u in a)


def test_parallel_restarts_match_serial(rng):
    X = rng.normal(0, 1, 50)
    data = DataSet(X, np.abs(X) + rng.normal(0, 0.05, 50))
    lv = TrimLevels(0.05, 0.95)
    s = fit_incvar(data, PA, ABS, lv, SolveConfig(restarts=3, seed=5))
    p = fit_incvar(data, PA, ABS, lv, SolveConfig(restarts=3, seed=5, n_jobs=2))
    assert s.best_objective == p.best_objective
    assert np.array_equal(s.best_theta.data, p.best_theta.data)


def test_numerical_failure_carries_theta():
    data = DataSet([1.0, 2.0], [1e200, -1e200])
    with pytest.raises(NumericalFailure) as exc:
        fit_incvar(data, LIN, SQ, TrimLevels(0, 1), SolveConfig(restarts=1))
    assert exc.value.theta is not None and len(exc.value.theta) == 2
