"""Multi-start DCA for empirical interval-CVaR regression.

With rank weights ``omega^(gamma)`` of the ascending loss sort and the DC split
``loss_i = phi_i - psi_i`` from :func:`incvar.models.dc_arrays`, the convex
functions

    U_gamma(theta) = sum_r omega_r^(gamma) loss_[r] + sum_i w_i psi_i

satisfy ``objective = (U_alpha - U_beta) / (beta - alpha)``.  Each DCA step
linearises ``U_beta`` and minimises the convex remainder.  For ``alpha > 0`` the
remainder is written as

    U_alpha(theta) = min_t  -alpha t + sum_i w_i max(phi_i, t + psi_i),

a sum of maxima of smooth convex pieces, which is softened with log-sum-exp
and handed to L-BFGS-B.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dataset import DataSet
from .exceptions import ConfigError, NumericalFailure
from .losses import LossSpec, residual_loss
from .models import ModelSpec, ParamVector, _pieces, dc_arrays, predict_many, require_dc
from .riskcore import TrimLevels, WeightedLossSample, in_cvar, rank_weights, var_at

MIN_LEVEL_GAP = 1e-9
MAX_SMOOTHING_HALVINGS = 5


@dataclass(frozen=True)
class SolveConfig:
    restarts: int = 20
    max_outer_iters: int = 200
    outer_tol: float = 1e-8
    inner_max_iters: int = 200
    inner_tol: float = 1e-12
    init_scale: float = 1.0
    seed: int = 0
    smoothing_eps: float = 1e-3
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("restarts", "max_outer_iters", "inner_max_iters", "n_jobs"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise ConfigError("must be an integer >= 1", name)
        for name in ("outer_tol", "inner_tol", "init_scale"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError("must be a positive finite number", name)
        if not (np.isfinite(self.smoothing_eps) and self.smoothing_eps >= 0):
            raise ConfigError("must be a nonnegative finite number", "smoothing_eps")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ConfigError("must be an integer", "seed")


@dataclass(frozen=True)
class SolveReport:
    best_theta: ParamVector
    best_objective: float
    traces: list
    termination: str  # of the best restart: "tol_reached" or "max_iters"
    restart_index_of_best: int
    terminations: list = field(default_factory=list)


@dataclass(frozen=True)
class AffineMinorant:
    """``value + <slope, theta' - at>``, below ``v`` everywhere."""

    value: float
    slope: np.ndarray
    at: np.ndarray

    def __call__(self, theta):
        data = theta.data if isinstance(theta, ParamVector) else np.asarray(theta, float)
        return float(self.value + self.slope @ (data - self.at))


def _check_levels(levels):
    if levels.width < MIN_LEVEL_GAP:
        raise ConfigError(f"beta - alpha must be at least {MIN_LEVEL_GAP}", "levels")


def loss_sample(data: DataSet, spec: ModelSpec, loss: LossSpec, theta) -> WeightedLossSample:
    """Per-point losses at ``theta`` as a weighted loss law."""
    r = predict_many(spec, theta, data.X) - data.y
    return WeightedLossSample(residual_loss(loss, r)[0], data.weights)


def objective(data: DataSet, spec: ModelSpec, loss: LossSpec, levels: TrimLevels, theta) -> float:
    """Empirical interval CVaR of the regression losses at ``theta``."""
    return in_cvar(loss_sample(data, spec, loss, theta), levels)


class _Problem:
    """Cached arrays and the value/gradient routines used inside one fit."""

    def __init__(self, data, spec, loss, levels):
        require_dc(spec, loss)
        _check_levels(levels)
        self.data, self.spec, self.loss, self.levels = data, spec, loss, levels
        self.X, self.y, self.w = data.X, data.y, data.weights
        self.alpha, self.beta, self.width = levels.alpha, levels.beta, levels.width
        self.pa = spec.family == "piecewise_affine"
        self.Z = (np.column_stack([self.X, np.ones(len(self.y))]) if self.pa
                  else spec.features(self.X))

    # exact quantities

    def values(self, theta):
        """Losses and ``psi`` terms at a raw parameter array."""
        if self.pa:
            G, H = _pieces(self.spec, theta)
            g = (self.Z @ G.T).max(axis=1)
            h = (self.Z @ H.T).max(axis=1)
            return np.abs(g - h - self.y), g + h
        ell = residual_loss(self.loss, self.Z @ theta - self.y)[0]
        return ell, np.zeros_like(ell)

    def objective(self, ell, theta):
        if not np.all(np.isfinite(ell)):
            raise NumericalFailure("non-finite loss encountered during DCA", theta)
        return in_cvar(WeightedLossSample(ell, self.w), self.levels)

    def upper(self, theta, gamma):
        """``U_gamma(theta)``."""
        ell, psi = self.values(theta)
        return float(rank_weights(ell, self.w, gamma) @ ell + self.w @ psi)

    def upper_subgradient(self, theta, gamma):
        ell, _ = self.values(theta)
        lam = rank_weights(ell, self.w, gamma)
        _, dphi, _, dpsi = dc_arrays(self.spec, self.loss, self.X, self.y, theta)
        return lam @ dphi + (self.w - lam) @ dpsi

    # smoothed inner surrogate over z = (theta, t)

    def _pieces_pa(self, theta, t):
        G, H = _pieces(self.spec, theta)
        PG, PH = self.Z @ G.T, self.Z @ H.T
        y = self.y[:, None]
        parts = [2.0 * PG - y, 2.0 * PH + y]
        if self.alpha > 0:
            parts.append((t + PG[:, :, None] + PH[:, None, :]).reshape(len(self.y), -1))
        return np.concatenate(parts, axis=1)

    def smoothed(self, z, mu, slope):
        q = self.spec.n_params
        theta, t = z[:q], (z[q] if self.alpha > 0 else 0.0)
        if self.pa:
            P = self._pieces_pa(theta, t)
        else:
            r = self.Z @ theta - self.y
            if self.loss.kind == "absolute":
                P, D = np.column_stack([r, -r]), np.column_stack([np.ones_like(r), -np.ones_like(r)])
            else:
                val, der = residual_loss(self.loss, r)
                P, D = val[:, None], der[:, None]
            if self.alpha > 0:
                P = np.column_stack([P, np.full(len(r), t)])
        m = P.max(axis=1, keepdims=True)
        E = np.exp((P - m) / mu)
        S = E.sum(axis=1, keepdims=True)
        pi = E / S
        val = (-self.alpha * t + self.w @ (m[:, 0] + mu * np.log(S[:, 0]))) / self.width
        val -= slope @ theta
        wpi = self.w[:, None] * pi
        if self.pa:
            I, J = self.spec.I, self.spec.J
            cg, ch = 2.0 * wpi[:, :I], 2.0 * wpi[:, I:I + J]
            if self.alpha > 0:
                wc = wpi[:, I + J:].reshape(-1, I, J)
                cg = cg + wc.sum(axis=2)
                ch = ch + wc.sum(axis=1)
                gt = wc.sum() - self.alpha
            gtheta = np.concatenate([(cg.T @ self.Z).ravel(), (ch.T @ self.Z).ravel()])
        else:
            k = D.shape[1]
            gtheta = self.Z.T @ (wpi[:, :k] * D).sum(axis=1)
            if self.alpha > 0:
                gt = wpi[:, k].sum() - self.alpha
        grad = gtheta / self.width - slope
        if self.alpha > 0:
            grad = np.append(grad, gt / self.width)
        return val, grad


def dca_decomposition(data: DataSet, spec: ModelSpec, loss: LossSpec, levels: TrimLevels,
                      theta: ParamVector):
    """``(u, v, minorant)`` with ``u - v`` the objective and ``minorant <= v``.

    ``u = U_alpha / (beta - alpha)`` and ``v = U_beta / (beta - alpha)``; the
    minorant is tight at ``theta``.
    """
    prob = _Problem(data, spec, loss, levels)
    x = theta.data
    u = prob.upper(x, levels.alpha) / levels.width
    v = prob.upper(x, levels.beta) / levels.width
    slope = prob.upper_subgradient(x, levels.beta) / levels.width
    return u, v, AffineMinorant(v, slope, np.array(x))


def _inner_smooth(prob, theta, t0, slope, mu, cfg):
    z0 = np.append(theta, t0) if prob.alpha > 0 else np.array(theta)
    res = minimize(prob.smoothed, z0, args=(mu, slope), jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.inner_max_iters, "ftol": cfg.inner_tol,
                            "gtol": 1e-12, "maxcor": 20})
    return res.x[:prob.spec.n_params]


def _subgradient_step(prob, theta, slope, s0, surrogate):
    g = prob.upper_subgradient(theta, prob.alpha) / prob.width - slope
    gn = float(np.linalg.norm(g))
    if gn == 0.0 or not np.isfinite(gn):
        return None
    step = max(1.0, float(np.linalg.norm(theta))) / gn
    for _ in range(40):
        cand = theta - step * g
        if surrogate(cand) < s0 - 1e-4 * step * gn * gn:
            return cand
        step *= 0.5
    return None


def _run_restart(prob, theta0, cfg):
    x = np.array(theta0, dtype=float)
    ell, _ = prob.values(x)
    obj = prob.objective(ell, x)
    trace = [obj]
    status = "max_iters"
    for _ in range(cfg.max_outer_iters):
        slope = prob.upper_subgradient(x, prob.beta) / prob.width

        def surrogate(th):
            return prob.upper(th, prob.alpha) / prob.width - slope @ th

        s0 = surrogate(x)
        cand = None
        if cfg.smoothing_eps > 0:
            mu = cfg.smoothing_eps * max(obj, 1e-12)
            t0 = var_at(WeightedLossSample(ell, prob.w), prob.alpha)
            for _ in range(MAX_SMOOTHING_HALVINGS + 1):
                c = _inner_smooth(prob, x, t0, slope, mu, cfg)
                if np.all(np.isfinite(c)) and surrogate(c) < s0:
                    cand = c
                    break
                mu *= 0.5
            if cand is None:
                cand = _subgradient_step(prob, x, slope, s0, surrogate)
        else:
            y_ = x
            for _ in range(cfg.inner_max_iters):
                nxt = _subgradient_step(prob, y_, slope, surrogate(y_), surrogate)
                if nxt is None:
                    break
                y_ = nxt
            cand = y_ if surrogate(y_) < s0 else None
        if cand is None:
            status = "tol_reached"
            break
        new_ell, _ = prob.values(cand)
        new_obj = prob.objective(new_ell, cand)
        if new_obj > obj:  # guard against rounding in the surrogate comparison
            status = "tol_reached"
            break
        decrease = (obj - new_obj) / max(1.0, obj)
        x, ell, obj = cand, new_ell, new_obj
        trace.append(obj)
        if decrease < cfg.outer_tol:
            status = "tol_reached"
            break
    return x, obj, trace, status


def initial_point(spec: ModelSpec, cfg: SolveConfig, restart: int) -> np.ndarray:
    """Uniform draw from the ball of radius ``init_scale`` for one restart."""
    rng = np.random.default_rng([int(cfg.seed) % 2**63, restart])
    q = spec.n_params
    d = rng.standard_normal(q)
    d /= np.linalg.norm(d)
    return cfg.init_scale * rng.uniform() ** (1.0 / q) * d


def fit_incvar(data: DataSet, spec: ModelSpec, loss: LossSpec, levels: TrimLevels,
               config: SolveConfig = SolveConfig()) -> SolveReport:
    """Minimise the empirical interval CVaR of the losses by multi-start DCA."""
    prob = _Problem(data, spec, loss, levels)
    with np.errstate(over="ignore", invalid="ignore"):
        return _fit(prob, spec, config)


def _fit(prob, spec, config):
    starts = [initial_point(spec, config, r) for r in range(config.restarts)]
    if config.n_jobs > 1:
        from joblib import Parallel, delayed
        runs = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_restart)(prob, s, config) for s in starts)
    else:
        runs = [_run_restart(prob, s, config) for s in starts]
    best = min(range(len(runs)), key=lambda r: (runs[r][1], r))
    x, obj, _, status = runs[best]
    return SolveReport(ParamVector(x, spec), float(obj), [r[2] for r in runs], status, best,
                       [r[3] for r in runs])
