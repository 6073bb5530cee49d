"""Quick randomized property checks over all modules, used by ``incvar selftest``."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import DataSet
from .experiments import gen_nominal, gen_perturbed
from .losses import LossSpec, check_c1_growth, eval_loss
from .metrics import EmpiricalCloud, levy_distance, prokhorov_distance
from .models import (ModelSpec, ParamVector, dc_components, nn_reparam, nn_reparam_inverse,
                     predict_many, reparam_predict_many)
from .riskcore import TrimLevels, WeightedLossSample, certify_lemma1, cvar_at, in_cvar, var_at
from .solver import SolveConfig, dca_decomposition, fit_incvar, objective


def _random_law(rng, n_max=20):
    n = int(rng.integers(1, n_max + 1))
    w = rng.uniform(0.1, 1.0, n)
    return WeightedLossSample(rng.exponential(1.0, n), w / w.sum())


def _random_levels(rng):
    a, b = np.sort(rng.uniform(0, 1, 2))
    return TrimLevels(a, b) if b - a > 1e-6 else TrimLevels(0.1, 0.9)


def check_in_cvar_quadrature(rng):
    s, lv = _random_law(rng), _random_levels(rng)
    u = lv.alpha + (np.arange(20000) + 0.5) / 20000 * lv.width
    approx = np.mean([var_at(s, x) for x in u])
    return abs(in_cvar(s, lv) - approx) <= 2e-3 * (1 + abs(approx))


def check_cvar_decomposition(rng):
    s, lv = _random_law(rng), _random_levels(rng)
    if lv.beta == 1.0:
        return True
    lhs = lv.width * in_cvar(s, lv)
    rhs = (1 - lv.alpha) * cvar_at(s, lv.alpha) - (1 - lv.beta) * cvar_at(s, lv.beta)
    return abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


def check_mixture_bounds(rng):
    d0, g, lv = _random_law(rng), _random_law(rng), _random_levels(rng)
    return certify_lemma1(d0, g, float(rng.uniform()), lv).all_applicable_pass


def check_squared_growth(rng):
    return check_c1_growth(LossSpec("squared"), 2.0, 1.0, 500, int(rng.integers(1 << 30))).holds


def check_dc_split(rng):
    spec = ModelSpec("piecewise_affine", p=2, I=2, J=3)
    theta = ParamVector(rng.standard_normal(spec.n_params), spec)
    x, y = rng.standard_normal(2), float(rng.standard_normal())
    phi, _, psi, _ = dc_components(spec, LossSpec("absolute"), x, y, theta)
    ref = eval_loss(LossSpec("absolute"), abs(predict_many(spec, theta, x[None])[0] - y))
    return abs(phi - psi - ref) <= 1e-10 * (1 + ref)


def check_piece_permutation(rng):
    spec = ModelSpec("piecewise_affine", p=1, I=3, J=2)
    data = rng.standard_normal(spec.n_params)
    blocks = data.reshape(5, 2)
    perm = np.concatenate([rng.permutation(3), 3 + rng.permutation(2)])
    X = rng.standard_normal((10, 1))
    a = predict_many(spec, ParamVector(data, spec), X)
    b = predict_many(spec, ParamVector(blocks[perm].ravel(), spec), X)
    return np.allclose(a, b, rtol=0, atol=1e-12)


def check_nn_reparam(rng):
    spec = ModelSpec("feedforward_nn", p=3, widths=(4, 1))
    theta = ParamVector(rng.standard_normal(spec.n_params), spec)
    C = nn_reparam(theta)
    X = rng.standard_normal((20, 3))
    ok = np.allclose(predict_many(spec, theta, X), reparam_predict_many(spec, C, X),
                     rtol=1e-9, atol=1e-9)
    lam = float(rng.uniform(0, 3))
    scaled = ParamVector(lam * C.data, spec)
    ok &= np.allclose(reparam_predict_many(spec, scaled, X),
                      lam * reparam_predict_many(spec, C, X), rtol=1e-9, atol=1e-9)
    return bool(ok and np.allclose(nn_reparam_inverse(C).data, theta.data, atol=1e-9))


def check_dca_identity(rng):
    spec = ModelSpec("piecewise_affine", p=1, I=2, J=2)
    data = gen_nominal(int(rng.integers(1 << 30)), n=30)
    lv = _random_levels(rng)
    theta = ParamVector(rng.standard_normal(spec.n_params), spec)
    u, v, _ = dca_decomposition(data, spec, LossSpec("absolute"), lv, theta)
    obj = objective(data, spec, LossSpec("absolute"), lv, theta)
    return abs(u - v - obj) <= 1e-10 * (1 + abs(obj))


def check_monotone_descent(rng):
    spec = ModelSpec("piecewise_affine", p=1, I=2, J=2)
    data = gen_nominal(int(rng.integers(1 << 30)), n=40)
    rep = fit_incvar(data, spec, LossSpec("absolute"), TrimLevels(0.05, 0.95),
                     SolveConfig(restarts=2, max_outer_iters=30, seed=int(rng.integers(1000))))
    return all(b <= a + 1e-8 for tr in rep.traces for a, b in zip(tr, tr[1:]))


def _brute_prokhorov(P, Q):
    n = len(P)
    D = cdist(P, Q)
    best = 1.0
    for perm in itertools.permutations(range(n)):
        d = np.sort(D[np.arange(n), list(perm)])
        for k in range(n):  # drop the k largest matched distances
            best = min(best, max(k / n, d[n - k - 1]))
    return best


def check_prokhorov_bruteforce(rng):
    n = int(rng.integers(1, 5))
    P, Q = rng.uniform(0, 1.5, (2, n, 2))
    d, _ = prokhorov_distance(EmpiricalCloud(P), EmpiricalCloud(Q))
    return d == _brute_prokhorov(P, Q)


def check_prokhorov_symmetry(rng):
    P, Q = rng.uniform(0, 1.5, (2, 6, 2))
    return prokhorov_distance(EmpiricalCloud(P), EmpiricalCloud(Q))[0] == \
        prokhorov_distance(EmpiricalCloud(Q), EmpiricalCloud(P))[0]


def check_levy_symmetry(rng):
    a, b = rng.uniform(0, 2, 5), rng.uniform(0, 2, 7)
    return levy_distance(a, b) == levy_distance(b, a)


def check_generator_determinism(rng):
    seed = int(rng.integers(1 << 30))
    a, b = gen_perturbed(5, seed, n=50), gen_perturbed(5, seed, n=50)
    return isinstance(a, DataSet) and np.array_equal(a.points(), b.points())


CHECKS = [
    ("riskcore.in_cvar_quadrature", check_in_cvar_quadrature, 20),
    ("riskcore.cvar_decomposition", check_cvar_decomposition, 50),
    ("riskcore.mixture_bounds", check_mixture_bounds, 50),
    ("losses.squared_growth", check_squared_growth, 5),
    ("models.dc_split", check_dc_split, 50),
    ("models.piece_permutation", check_piece_permutation, 20),
    ("models.nn_reparam", check_nn_reparam, 20),
    ("solver.dca_identity", check_dca_identity, 10),
    ("solver.monotone_descent", check_monotone_descent, 2),
    ("metrics.prokhorov_bruteforce", check_prokhorov_bruteforce, 30),
    ("metrics.prokhorov_symmetry", check_prokhorov_symmetry, 20),
    ("metrics.levy_symmetry", check_levy_symmetry, 20),
    ("experiments.determinism", check_generator_determinism, 5),
]


def run_selftest(seed=0, out=print):
    """Run every check; returns ``(passed, failed)`` counts of individual trials."""
    rng = np.random.default_rng(seed)
    passed = failed = 0
    for name, fn, trials in CHECKS:
        ok = 0
        for _ in range(trials):
            try:
                ok += bool(fn(rng))
            except Exception:  # a crash counts as a failed trial
                pass
        passed += ok
        failed += trials - ok
        out(f"{'PASS' if ok == trials else 'FAIL'} {name} ({ok}/{trials})")
    out(f"selftest: {passed} passed, {failed} failed")
    return passed, failed
