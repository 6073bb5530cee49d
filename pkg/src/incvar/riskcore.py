"""Exact VaR, CVaR and interval CVaR on finite weighted loss distributions.

All statistics are integrals of the step quantile function of a finite law and
are evaluated in closed form from interval overlaps of the cumulative weight
grid, never by sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import DomainError

#: Weight sums off by at most this much are renormalised; larger drift is rejected.
WEIGHT_RENORM_TOL = 1e-9
#: Cumulative weights within this distance of a level count as reaching it.
BREAKPOINT_TOL = 1e-12
#: Tolerance used by the mixture-bound certifier.
CERTIFY_TOL = 1e-9


def _as_weights(weights, n):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise DomainError(f"expected {n} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DomainError("weights must be finite and strictly positive")
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_RENORM_TOL:
        raise DomainError(f"weights sum to {total!r}, not 1")
    return w / total


def _check_prob(name, value, *, upper_open=False):
    value = float(value)
    if not np.isfinite(value) or value < 0.0 or value > 1.0 or (upper_open and value == 1.0):
        bound = "[0, 1)" if upper_open else "[0, 1]"
        raise DomainError(f"{name} must lie in {bound}, got {value!r}")
    return value


def interval_overlaps(cum, lo, hi):
    """Lengths of ``(cum[i-1], cum[i]] ∩ (lo, hi]`` for a cumulative grid.

    ``cum`` must start at 0 and end at 1.
    """
    left = np.maximum(cum[:-1], lo)
    right = np.minimum(cum[1:], hi)
    return np.clip(right - left, 0.0, None)


def rank_weights(losses, weights, gamma):
    """Per-point weights ``|(c_{r-1}, c_r] ∩ (gamma, 1]|`` in the original order.

    Points are ranked by ascending loss with a stable sort, so ties are broken
    by point index.  ``(rank_weights * losses).sum()`` equals
    ``(1 - gamma) * CVaR_gamma``.
    """
    losses = np.asarray(losses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(losses, kind="stable")
    cum = np.concatenate(([0.0], np.cumsum(weights[order])))
    cum[-1] = 1.0
    omega = np.empty_like(weights)
    omega[order] = interval_overlaps(cum, gamma, 1.0)
    return omega


@dataclass(frozen=True)
class TrimLevels:
    """Trimming pair ``0 <= alpha < beta <= 1`` of an interval CVaR."""

    alpha: float
    beta: float

    def __post_init__(self):
        a = _check_prob("alpha", self.alpha)
        b = _check_prob("beta", self.beta)
        if not a < b:
            raise DomainError(f"need alpha < beta, got alpha={a!r}, beta={b!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def width(self):
        return self.beta - self.alpha


@dataclass(frozen=True, eq=False)
class WeightedLossSample:
    """A finite loss law: nonnegative values with positive weights summing to one.

    ``weights=None`` means uniform weights.
    """

    values: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise DomainError("a loss sample needs at least one value")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("loss values must be finite and nonnegative")
        w = _as_weights(self.weights, v.size)
        v.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.values.size

    @cached_property
    def _sorted(self):
        order = np.argsort(self.values, kind="stable")
        cum = np.concatenate(([0.0], np.cumsum(self.weights[order])))
        cum[-1] = 1.0
        return self.values[order], cum

    def mean(self):
        return float(np.dot(self.values, self.weights))

    def cdf(self, t):
        """``P(L <= t)``."""
        return float(self.weights[self.values <= t].sum())

    def _concat(self, other, a, b):
        return WeightedLossSample(
            np.concatenate([self.values, other.values]),
            np.concatenate([a * self.weights, b * other.weights]),
        )


def var_at(sample: WeightedLossSample, gamma: float) -> float:
    """``inf{t : P(L <= t) >= gamma}``; level 0 maps to the minimum value."""
    gamma = _check_prob("gamma", gamma)
    v, cum = sample._sorted
    if gamma == 0.0:
        return float(v[0])
    idx = int(np.searchsorted(cum[1:], gamma - BREAKPOINT_TOL, side="left"))
    return float(v[min(idx, v.size - 1)])


def in_cvar(sample: WeightedLossSample, levels: TrimLevels) -> float:
    """Average of VaR over the levels ``(alpha, beta]``, integrated exactly."""
    v, cum = sample._sorted
    overlap = interval_overlaps(cum, levels.alpha, levels.beta)
    return float(np.dot(v, overlap) / levels.width)


def cvar_at(sample: WeightedLossSample, gamma: float) -> float:
    """Average of VaR over the levels ``(gamma, 1]``."""
    gamma = _check_prob("gamma", gamma, upper_open=True)
    return in_cvar(sample, TrimLevels(gamma, 1.0))


def mixture(d0, g, eps):
    """``(1 - eps) * d0 + eps * g`` by concatenating supports.

    Works for :class:`WeightedLossSample` and :class:`~incvar.dataset.DataSet`.
    Coincident points are kept apart; components with zero mass are dropped.
    """
    eps = _check_prob("eps", eps)
    if type(d0) is not type(g):
        raise DomainError(f"cannot mix {type(d0).__name__} with {type(g).__name__}")
    if eps == 0.0:
        return d0
    if eps == 1.0:
        return g
    return d0._concat(g, 1.0 - eps, eps)


# --------------------------------------------------------------------------
# mixture bound certification


@dataclass(frozen=True)
class ClauseCheck:
    """One side-by-side bound evaluation.

    ``passed`` is ``None`` when the clause's regime does not apply.
    """

    clause: str
    applicable: bool
    lhs: float = float("nan")
    rhs: float = float("nan")
    passed: bool | None = None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ContaminationBoundReport:
    a: ClauseCheck
    b: ClauseCheck
    c: ClauseCheck

    @property
    def clauses(self):
        return (self.a, self.b, self.c)

    @property
    def all_applicable_pass(self):
        return all(c.passed for c in self.clauses if c.applicable)


def _clip_level(x):
    if -BREAKPOINT_TOL < x < 0.0:
        return 0.0
    if 1.0 < x < 1.0 + BREAKPOINT_TOL:
        return 1.0
    return x


def _clause_a(mix, d0, eps, levels):
    if not eps <= 1.0 - levels.beta:
        return ClauseCheck("a", False)
    lo = _clip_level(levels.alpha / (1.0 - eps))
    hi = _clip_level(levels.beta / (1.0 - eps))
    lhs = in_cvar(mix, levels)
    rhs = in_cvar(d0, TrimLevels(lo, hi))
    return ClauseCheck("a", True, lhs, rhs, lhs <= rhs + CERTIFY_TOL, {"levels": (lo, hi)})


def _level_b(eps, beta, eta):
    return _clip_level((beta - eps * eta) / (1.0 - eps))


def _eta_ok(d0, g, eps, beta, eta):
    level = _level_b(eps, beta, eta)
    if not 0.0 <= level <= 1.0:
        return False
    return g.cdf(var_at(d0, level)) >= eta - BREAKPOINT_TOL


def _largest_eta(d0, g, eps, beta):
    lo = max((eps + beta - 1.0) / eps, 0.0)
    hi = min(1.0, beta / eps)
    _, cum = d0._sorted
    cands = {lo, hi}
    cands.update((beta - (1.0 - eps) * cum) / eps)
    cands.update(g.cdf(v) for v in d0.values)
    good = [e for e in cands if lo <= e <= hi and _eta_ok(d0, g, eps, beta, e)]
    return max(good) if good else None


def _clause_b(mix, d0, g, eps, levels, eta):
    beta = levels.beta
    if not (0.0 < eps <= beta and eps < 1.0):
        return ClauseCheck("b", False)
    if eta is None:
        eta = _largest_eta(d0, g, eps, beta)
    elif not (eta >= (eps + beta - 1.0) / eps and _eta_ok(d0, g, eps, beta, eta)):
        eta = None
    if eta is None:
        return ClauseCheck("b", False, detail={"reason": "no eta satisfies the hypothesis"})
    level = _level_b(eps, beta, eta)
    lhs = in_cvar(mix, levels)
    rhs = var_at(d0, level)
    detail = {"eta": eta, "level": level}
    # report the neighbouring atom when the level sits on a cumulative breakpoint
    v, cum = d0._sorted
    near = np.flatnonzero(np.abs(cum[1:-1] - level) <= CERTIFY_TOL)
    if near.size:
        k = int(near[0])
        detail["adjacent_atoms"] = (float(v[k]), float(v[k + 1]))
    return ClauseCheck("b", True, lhs, rhs, lhs <= rhs + CERTIFY_TOL, detail)


def _clause_c(mix, g, eps, levels):
    # a float-level overlap with 1 - beta means the clause's coefficient is zero
    if not (1.0 - levels.beta + BREAKPOINT_TOL < eps <= 1.0 - levels.alpha):
        return ClauseCheck("c", False)
    top = _clip_level((levels.beta + eps - 1.0) / eps)
    lhs = in_cvar(mix, levels)
    rhs = (levels.beta + eps - 1.0) / levels.width * in_cvar(g, TrimLevels(0.0, top))
    return ClauseCheck("c", True, lhs, rhs, lhs >= rhs - CERTIFY_TOL, {"level": top})


def certify_lemma1(d0: WeightedLossSample, g: WeightedLossSample, eps: float,
                   levels: TrimLevels, eta: float | None = None) -> ContaminationBoundReport:
    """Evaluate both sides of the three contamination bounds for In-CVaR.

    ``d0`` and ``g`` are the loss laws of the nominal and contaminating
    distributions at a fixed parameter.  With ``D = (1-eps) d0 + eps g``:

    * (a) ``eps <= 1-beta``: In-CVaR(D) <= In-CVaR of d0 at levels rescaled by ``1/(1-eps)``.
    * (b) ``0 < eps <= beta``: In-CVaR(D) <= VaR of d0 at ``(beta - eps*eta)/(1-eps)``,
      for an ``eta`` with ``P_g(L <= that VaR) >= eta >= (eps+beta-1)/eps``.  If
      ``eta`` is not given, the largest admissible one is searched for.
    * (c) ``1-beta < eps <= 1-alpha``: In-CVaR(D) >= ``(beta+eps-1)/(beta-alpha)``
      times In-CVaR of g over ``(0, (beta+eps-1)/eps]``.

    Clauses outside their regime are reported as not applicable, never failed.
    """
    eps = _check_prob("eps", eps)
    mix = mixture(d0, g, eps)
    return ContaminationBoundReport(
        _clause_a(mix, d0, eps, levels),
        _clause_b(mix, d0, g, eps, levels, eta),
        _clause_c(mix, g, eps, levels),
    )
