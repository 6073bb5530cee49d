"""Loss functions on absolute residuals and sampled checks of their growth conditions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

KINDS = ("absolute", "squared", "huber")


@dataclass(frozen=True)
class LossSpec:
    kind: str
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "huber":
            if self.delta is None or not np.isfinite(self.delta) or self.delta <= 0:
                raise DomainError("huber loss needs a positive finite delta")
            object.__setattr__(self, "delta", float(self.delta))
        elif self.delta is not None:
            raise DomainError(f"delta is only meaningful for huber, not {self.kind!r}")

    @property
    def tag(self):
        return f"huber(delta={self.delta!r})" if self.kind == "huber" else self.kind


def _loss(spec, t):
    if spec.kind == "absolute":
        return t
    if spec.kind == "squared":
        return t * t
    d = spec.delta
    return np.where(t <= d, 0.5 * t * t, d * (t - 0.5 * d))


def _dloss(spec, t):
    if spec.kind == "absolute":
        return np.ones_like(t)
    if spec.kind == "squared":
        return 2.0 * t
    # the knee takes the quadratic branch's slope
    return np.where(t <= spec.delta, t, spec.delta)


def eval_loss(spec: LossSpec, t):
    """Loss of a nonnegative residual magnitude ``t`` (scalar or array)."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("loss argument must be finite and nonnegative")
    out = _loss(spec, arr)
    return float(out) if np.ndim(out) == 0 else out


def loss_derivative(spec: LossSpec, t):
    """Right derivative of the loss at ``t >= 0`` (array-friendly)."""
    return _dloss(spec, np.asarray(t, dtype=float))


def residual_loss(spec: LossSpec, r):
    """``L(|r|)`` and its derivative with respect to the signed residual ``r``."""
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    return _loss(spec, a), _dloss(spec, a) * np.sign(r)


@dataclass(frozen=True)
class GrowthReport:
    """Outcome of the sampled ``L(st)/L(t) <= s**k`` search."""

    max_margin: float
    witness: tuple[float, float] | None
    holds: bool
    convex_on_samples: bool
    num_samples: int


def check_c1_growth(spec: LossSpec, k: float, T: float, num_samples: int = 10_000,
                    seed: int = 0) -> GrowthReport:
    """Search ``s in [0, 1]``, ``t > T`` for violations of ``L(st)/L(t) <= s**k``.

    ``t`` is drawn log-uniformly from ``(T, 1e6 T]``; the endpoints ``s = 0, 1``
    are always included.  A positive ``max_margin`` comes with the witness
    ``(s, t)`` attaining it.  Convexity is checked on random midpoints.
    """
    if k <= 1 or T <= 0 or num_samples < 1:
        raise DomainError("need k > 1, T > 0 and num_samples >= 1")
    rng = np.random.default_rng(seed)
    s = np.concatenate(([0.0, 1.0], rng.uniform(0.0, 1.0, num_samples)))
    t = T * np.exp(rng.uniform(0.0, np.log(1e6), s.size))
    t = np.where(t > T, t, np.nextafter(T, np.inf))
    margin = _loss(spec, s * t) / _loss(spec, t) - s**k
    i = int(np.argmax(margin))
    worst = float(margin[i])
    u, v = rng.uniform(0, 10 * T, (2, num_samples))
    mid = _loss(spec, 0.5 * (u + v))
    convex = bool(np.all(mid <= 0.5 * (_loss(spec, u) + _loss(spec, v)) + 1e-12 * (1 + mid)))
    holds = worst <= 1e-12
    return GrowthReport(worst, None if holds else (float(s[i]), float(t[i])), holds, convex,
                        int(s.size))


@dataclass(frozen=True)
class VanishingReport:
    ratios: np.ndarray  # ratios[i, j] = L(s_j t_i) / L(t_i); nan where s_j t_i > cap
    tail_max: float
    passed: bool


def check_c2_vanishing(spec: LossSpec, t_grid, s_grid, cap: float = 1.0,
                       tol: float = 1e-3) -> VanishingReport:
    """Tabulate ``L(s t)/L(t)`` along ``t -> inf``, ``s -> 0`` with ``s t <= cap``.

    Passes when every tabulated ratio in the row of the largest ``t`` is at
    most ``tol``.
    """
    t = np.asarray(t_grid, dtype=float)
    s = np.asarray(s_grid, dtype=float)
    if t.size == 0 or s.size == 0:
        raise DomainError("grids must be nonempty")
    if np.any(np.diff(t) <= 0) or np.any(np.diff(s) >= 0) or np.any(s <= 0) or t[0] <= 0:
        raise DomainError("t_grid must increase and s_grid must be positive and decreasing")
    st = t[:, None] * s[None, :]
    ratios = np.where(st <= cap, _loss(spec, st) / _loss(spec, t)[:, None], np.nan)
    last = ratios[-1]
    if np.all(np.isnan(last)):
        return VanishingReport(ratios, float("nan"), False)
    tail = float(np.nanmax(last))
    return VanishingReport(ratios, tail, tail <= tol)
