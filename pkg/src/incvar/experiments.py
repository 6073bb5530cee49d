"""Seeded data generators, robustness sweeps and their CSV/SVG output.

Three estimators are compared on piecewise-affine l1 regression with two
max-affine pieces on each side: interval CVaR at ``levels``, the expectation
(levels ``(0, 1)``) and CVaR at ``gamma_cvar`` (levels ``(gamma_cvar, 1)``).
Fits are summarised by ``tbar``, the grid-averaged log10 magnitude of the
fitted function, and compared against ``tbar`` at the generating parameter.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .dataset import DataSet
from .exceptions import ConfigError, DomainError, NumericalFailure
from .losses import LossSpec
from .models import ModelSpec, ParamVector, predict_many
from .riskcore import TrimLevels, mixture
from .solver import SolveConfig, fit_incvar

PA_SPEC = ModelSpec("piecewise_affine", p=1, I=2, J=2)
#: Generating parameter of the nominal law, laid out as (a1, b1, a2, b2, c1, d1, c2, d2).
THETA_TRUE = ParamVector([-1.0, 1.0, 0.0, -2.0, -1.0, 3.0, -2.0, 2.0], PA_SPEC)
TBAR_GRID = -100.0 + 0.1 * np.arange(2000)
TBAR_FLOOR = 1e-12

SCENARIOS = {
    "contamination_sweep": "eps",
    "level_sweep_beta": "beta",
    "level_sweep_alpha": "alpha",
    "perturbation_sweep": "k",
}
ESTIMATORS = ("incvar", "expectation", "cvar")
CSV_HEADER = ["scenario", "grid_param", "grid_value", "estimator", "tbar", "tbar_true",
              "objective", "seconds", "failed"]


# --------------------------------------------------------------------------
# generators


def _nominal_response(x):
    return np.maximum(-x + 1, -2) - np.maximum(-x + 3, -2 * x + 2)


def _contamination_response(x):
    return np.maximum(100 * x + 200, 300 * x - 400) - np.maximum(200 * x - 100, 400 * x + 100)


def _perturbation_response(x, k):
    return k * (np.maximum(x + 2, 3 * x - 4) - np.maximum(2 * x - 1, 4 * x + 1))


def gen_nominal(seed, n=200, noise_sigma=0.05) -> DataSet:
    """``X ~ N(0, 1)`` with a two-kink piecewise-affine response plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    return DataSet(x, _nominal_response(x) + noise_sigma * rng.standard_normal(n))


def gen_contamination(seed, n=200, noise_sigma=0.05) -> DataSet:
    """Leverage contamination: ``X ~ N(0, 200**2)`` with a steep piecewise-affine response."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 200.0, n)
    return DataSet(x, _contamination_response(x) + noise_sigma * rng.standard_normal(n))


def gen_perturbed_coupled(k, seed, n=1000, noise_sigma=0.05):
    """Draws of :func:`gen_perturbed` together with the nominal draws they came from.

    Returns ``(perturbed, nominal)``.  Row ``i`` of ``perturbed`` equals row ``i``
    of ``nominal`` shifted by at most ``1/k``, unless it was replaced by an
    outlier-grid point, so the pair is an explicit coupling of the two laws.
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k!r}")
    k = int(k)
    rng = np.random.default_rng(seed)
    gx = 10.0 * np.arange(200)
    gy = _perturbation_response(gx, k) + noise_sigma * rng.standard_normal(200)
    from_grid = rng.uniform(size=n) < 1.0 / k
    x0 = rng.standard_normal(n)
    y0 = _nominal_response(x0) + noise_sigma * rng.standard_normal(n)
    pick = rng.integers(0, 200, n)
    x = np.where(from_grid, gx[pick], x0)
    y = np.where(from_grid, gy[pick], y0)
    radius = np.sqrt(rng.uniform(size=n)) / k
    angle = rng.uniform(0.0, 2 * np.pi, n)
    return DataSet(x + radius * np.cos(angle), y + radius * np.sin(angle)), DataSet(x0, y0)


def gen_perturbed(k, seed, n=1000, noise_sigma=0.05) -> DataSet:
    """``n`` draws from the ``1/k`` perturbation of the nominal law.

    A draw is nominal with probability ``1 - 1/k`` and otherwise taken from a
    200-point outlier grid ``x = 0, 10, ..., 1990``; every draw is then shifted
    in the (x, y) plane by ``delta / k`` with ``delta`` uniform in the unit disk.
    """
    return gen_perturbed_coupled(k, seed, n, noise_sigma)[0]


def tbar(spec: ModelSpec, theta: ParamVector) -> float:
    """Mean of ``log10(max(|f(x)|, 1e-12))`` over ``x = -100, -99.9, ..., 99.9``."""
    if spec.p != 1:
        raise DomainError("tbar is defined for one-dimensional attributes")
    vals = np.abs(predict_many(spec, theta, TBAR_GRID[:, None]))
    return float(np.mean(np.log10(np.maximum(vals, TBAR_FLOOR))))


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class ScenarioConfig:
    """One sweep.  ``grid`` holds eps, beta, alpha or k values depending on ``scenario``.

    ``contamination`` is the fixed eps of the level sweeps and ``estimators``
    selects which of the three estimators are fitted.
    """

    scenario: str
    grid: tuple
    levels: TrimLevels = TrimLevels(0.05, 0.95)
    gamma_cvar: float = 0.5
    solver: SolveConfig = SolveConfig()
    master_seed: int = 0
    noise_sigma: float = 0.05
    n_nominal: int = 200
    n_contam: int = 200
    n_perturbed: int = 1000
    contamination: float = 0.05
    estimators: tuple = ESTIMATORS

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}", "scenario")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ConfigError("grid must be nonempty", self.grid_name)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("grid must be strictly increasing", self.grid_name)
        if self.scenario == "perturbation_sweep":
            if any(g != int(g) or g < 1 for g in grid):
                raise ConfigError("k values must be integers >= 1", self.grid_name)
            grid = tuple(int(g) for g in grid)
        elif self.scenario == "contamination_sweep":
            if any(not 0 <= g <= 1 for g in grid):
                raise ConfigError("eps values must lie in [0, 1]", self.grid_name)
        object.__setattr__(self, "grid", grid)
        for g in grid:  # every cell must produce valid levels
            try:
                self.levels_at(g)
            except DomainError as exc:
                raise ConfigError(str(exc), self.grid_name) from None
            except ConfigError as exc:
                raise ConfigError(str(exc).split(": ", 1)[-1], self.grid_name) from None
        if not 0 <= self.gamma_cvar < 1:
            raise ConfigError("must lie in [0, 1)", "gamma_cvar")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ConfigError("must be a nonnegative number", "noise_sigma")
        if not 0 <= self.contamination <= 1:
            raise ConfigError("must lie in [0, 1]", "contamination")
        for name in ("n_nominal", "n_contam", "n_perturbed"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be >= 1", name)
        est = tuple(self.estimators)
        if not est or any(e not in ESTIMATORS for e in est) or len(set(est)) != len(est):
            raise ConfigError(f"must be distinct values from {ESTIMATORS}", "estimators")
        object.__setattr__(self, "estimators", tuple(e for e in ESTIMATORS if e in est))

    @property
    def grid_param(self):
        return SCENARIOS[self.scenario]

    @property
    def grid_name(self):
        return f"{self.grid_param}_grid"

    def levels_at(self, value):
        """In-CVaR levels used in the cell at grid ``value``."""
        lv = self.levels
        if self.scenario == "level_sweep_beta":
            lv = TrimLevels(lv.alpha, value)
        elif self.scenario == "level_sweep_alpha":
            lv = TrimLevels(value, lv.beta)
        if lv.width < 1e-9:
            raise ConfigError("beta - alpha must be at least 1e-9", "levels")
        return lv

    def to_dict(self):
        return {
            "scenario": self.scenario, self.grid_name: list(self.grid),
            "levels": {"alpha": self.levels.alpha, "beta": self.levels.beta},
            "gamma_cvar": self.gamma_cvar, "solver": asdict(self.solver),
            "master_seed": self.master_seed, "noise_sigma": self.noise_sigma,
            "n_nominal": self.n_nominal, "n_contam": self.n_contam,
            "n_perturbed": self.n_perturbed, "contamination": self.contamination,
            "estimators": list(self.estimators),
        }


@dataclass(frozen=True)
class SweepRow:
    grid_value: float
    estimator: str
    tbar: float
    objective: float
    seconds: float
    failed: bool


@dataclass(frozen=True)
class SweepResult:
    config: ScenarioConfig
    rows: list
    tbar_true: float
    metadata: dict = field(default_factory=dict)

    def deviations(self, estimator):
        """``|tbar(fit) - tbar(true)|`` along the grid for one estimator."""
        return np.array([abs(r.tbar - self.tbar_true) for r in self.rows
                         if r.estimator == estimator])


def derive_seed(*keys) -> int:
    """A 63-bit seed from integer or string keys, stable across platforms."""
    words = []
    for k in keys:
        if isinstance(k, str):
            words.extend(k.encode())
        else:
            words.append(int(k) % 2**32)
    return int(np.random.SeedSequence(words).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _datasets(cfg):
    """One dataset per grid value, in grid order."""
    ms = cfg.master_seed
    if cfg.scenario == "perturbation_sweep":
        return [gen_perturbed(k, derive_seed(ms, "perturbed", i), cfg.n_perturbed,
                              cfg.noise_sigma) for i, k in enumerate(cfg.grid)]
    d0 = gen_nominal(derive_seed(ms, "nominal"), cfg.n_nominal, cfg.noise_sigma)
    g = gen_contamination(derive_seed(ms, "contamination"), cfg.n_contam, cfg.noise_sigma)
    if cfg.scenario == "contamination_sweep":
        return [mixture(d0, g, eps) for eps in cfg.grid]
    mixed = mixture(d0, g, cfg.contamination)
    return [mixed] * len(cfg.grid)


def _estimator_levels(cfg, estimator, value):
    if estimator == "incvar":
        return cfg.levels_at(value)
    if estimator == "expectation":
        return TrimLevels(0.0, 1.0)
    return TrimLevels(cfg.gamma_cvar, 1.0)


def _run_cell(cfg, data, idx, value, estimator):
    seed = derive_seed(cfg.master_seed, cfg.scenario, idx, estimator)
    solver = SolveConfig(**{**asdict(cfg.solver), "seed": seed, "n_jobs": 1})
    start = time.perf_counter()
    try:
        rep = fit_incvar(data, PA_SPEC, LossSpec("absolute"),
                         _estimator_levels(cfg, estimator, value), solver)
        tb, obj, failed = tbar(PA_SPEC, rep.best_theta), rep.best_objective, False
    except NumericalFailure:
        tb, obj, failed = float("nan"), float("nan"), True
    return SweepRow(value, estimator, tb, obj, time.perf_counter() - start, failed)


def run_sweep(config: ScenarioConfig, n_jobs: int = 1) -> SweepResult:
    """Fit every (grid value, estimator) cell and summarise each fit by ``tbar``."""
    datasets = _datasets(config)
    cells = [(i, v, e) for i, v in enumerate(config.grid) for e in config.estimators]
    if n_jobs > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_run_cell)(config, datasets[i], i, v, e) for i, v, e in cells)
    else:
        rows = [_run_cell(config, datasets[i], i, v, e) for i, v, e in cells]
    meta = {
        "version": __version__,
        "config": config.to_dict(),
        "seeds": {f"{i}:{e}": derive_seed(config.master_seed, config.scenario, i, e)
                  for i, _, e in cells},
    }
    return SweepResult(config, rows, tbar(PA_SPEC, THETA_TRUE), meta)


# --------------------------------------------------------------------------
# output


def _fmt(v):
    return format(float(v), ".17g")


def sweep_csv(result: SweepResult, record_seconds=False) -> str:
    """CSV text of a sweep; ``seconds`` is left blank unless ``record_seconds``."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(CSV_HEADER)
    cfg = result.config
    for r in result.rows:
        out.writerow([cfg.scenario, cfg.grid_param, _fmt(r.grid_value), r.estimator,
                      _fmt(r.tbar), _fmt(result.tbar_true), _fmt(r.objective),
                      _fmt(r.seconds) if record_seconds else "", int(r.failed)])
    return buf.getvalue()


_COLORS = {"incvar": "#1f77b4", "expectation": "#d62728", "cvar": "#2ca02c", "true": "#444444"}


def sweep_svg(result: SweepResult, width=640, height=400) -> str:
    """Line plot of ``tbar`` against the grid value, one polyline per estimator."""
    cfg = result.config
    left, right, top, bottom = 60.0, 20.0, 20.0, 40.0
    xs = np.array(cfg.grid, dtype=float)
    series = {e: np.array([r.tbar for r in result.rows if r.estimator == e])
              for e in cfg.estimators}
    vals = np.concatenate([s[np.isfinite(s)] for s in series.values()] + [[result.tbar_true]])
    ylo, yhi = float(vals.min()), float(vals.max())
    if yhi - ylo < 1e-9:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    xlo, xhi = float(xs.min()), float(xs.max())
    if xhi - xlo < 1e-12:
        xlo, xhi = xlo - 1.0, xhi + 1.0

    def sx(v):
        return left + (v - xlo) / (xhi - xlo) * (width - left - right)

    def sy(v):
        return height - bottom - (v - ylo) / (yhi - ylo) * (height - top - bottom)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" '
        'stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{cfg.grid_param}</text>',
        f'<text x="12" y="{top + 10}" font-family="sans-serif" font-size="12">T</text>',
    ]
    for v in (ylo, yhi):
        lines.append(f'<text x="{left - 4}" y="{sy(v) + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{v:.3g}</text>')
    for v in (xlo, xhi):
        lines.append(f'<text x="{sx(v):.2f}" y="{height - bottom + 14}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{v:.3g}</text>')
    yt = sy(result.tbar_true)
    lines.append(f'<line x1="{left}" y1="{yt:.2f}" x2="{width - right}" y2="{yt:.2f}" '
                 f'stroke="{_COLORS["true"]}" stroke-dasharray="4 3"/>')
    for j, (est, ys) in enumerate(series.items()):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        lines.append(f'<polyline fill="none" stroke="{_COLORS[est]}" stroke-width="1.5" '
                     f'points="{pts}"><title>{est}</title></polyline>')
        lines.append(f'<text x="{width - right - 4}" y="{top + 12 * (j + 1)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11" fill="{_COLORS[est]}">{est}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit(result: SweepResult, csv_path, svg_path, record_seconds=False):
    """Write the CSV table and SVG plot of a sweep."""
    with open(csv_path, "w", newline="") as fh:
        fh.write(sweep_csv(result, record_seconds))
    with open(svg_path, "w") as fh:
        fh.write(sweep_svg(result))
