"""Regression families, their parameter layouts, and model-side diagnostics.

Every family is evaluated through :func:`predict_many`; the solver only needs
:func:`dc_arrays`, which splits ``L(|f(x, theta) - y|)`` into a difference of
two convex functions of ``theta`` for the supported (family, loss) pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ContractError, DomainError, UnsupportedCombinationError
from .losses import LossSpec, residual_loss

FAMILIES = ("linear", "piecewise_affine", "polynomial", "exponential",
            "logarithmic", "power", "feedforward_nn")
PARAMETER_LINEAR = ("linear", "polynomial", "logarithmic")
HOMOGENEOUS_ACTIVATIONS = ("relu", "leaky_relu", "identity")
ACTIVATIONS = HOMOGENEOUS_ACTIVATIONS + ("tanh", "sigmoid")


@dataclass(frozen=True)
class ModelSpec:
    """A regression family together with its dimensions.

    ``widths`` lists the layer sizes ``M_1, ..., M_L`` of a feedforward net
    (``M_L`` must be 1); ``activation`` applies to hidden layers and
    ``output_activation`` to the last one.  ``tau`` is the positivity floor of
    the scale parameter of the exponential and power families.
    """

    family: str
    p: int = 1
    I: int | None = None
    J: int | None = None
    degree: int | None = None
    widths: tuple | None = None
    activation: str = "relu"
    leaky_slope: float = 0.01
    output_activation: str = "identity"
    tau: float = 1e-6

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        if int(self.p) < 1:
            raise DomainError("p must be >= 1")
        if self.family == "piecewise_affine":
            if self.I is None or self.J is None or self.I < 1 or self.J < 1:
                raise DomainError("piecewise_affine needs I, J >= 1")
        if self.family == "polynomial" and (self.degree is None or self.degree < 0):
            raise DomainError("polynomial needs degree >= 0")
        if self.family == "feedforward_nn":
            if not self.widths or any(int(m) < 1 for m in self.widths):
                raise DomainError("feedforward_nn needs layer widths >= 1")
            if int(self.widths[-1]) != 1:
                raise DomainError("the last layer of feedforward_nn must have width 1")
            object.__setattr__(self, "widths", tuple(int(m) for m in self.widths))
            for act in (self.activation, self.output_activation):
                if act not in ACTIVATIONS:
                    raise DomainError(f"unknown activation {act!r}")
        if self.family in ("exponential", "power") and not self.tau > 0:
            raise DomainError("tau must be positive")

    # -- layout -------------------------------------------------------------

    @cached_property
    def layout(self):
        """Tuple of ``(name, start, shape)`` blocks in storage order."""
        p = self.p
        if self.family in ("linear", "exponential"):
            shapes = [("theta1", (p,)), ("theta0", ())]
        elif self.family in ("logarithmic", "power"):
            shapes = [("theta0", ()), ("theta1", (p,))]
        elif self.family == "piecewise_affine":
            shapes = []
            for i in range(1, self.I + 1):
                shapes += [(f"a_{i}", (p,)), (f"b_{i}", ())]
            for j in range(1, self.J + 1):
                shapes += [(f"c_{j}", (p,)), (f"d_{j}", ())]
        elif self.family == "polynomial":
            shapes = [("coef", (len(self.exponents),))]
        else:
            shapes = []
            prev = p
            for ell, m in enumerate(self.widths, start=1):
                shapes += [(f"A_{ell}", (m, prev)), (f"b_{ell}", (m,))]
                prev = m
        out, start = [], 0
        for name, shape in shapes:
            out.append((name, start, shape))
            start += int(np.prod(shape, dtype=int))
        return tuple(out)

    @property
    def n_params(self):
        name, start, shape = self.layout[-1]
        return start + int(np.prod(shape, dtype=int))

    @cached_property
    def exponents(self):
        """Monomial exponents ordered by total degree, then descending lexicographically."""
        if self.family != "polynomial":
            raise ContractError("exponents are only defined for polynomial models")
        out = []
        for d in range(self.degree + 1):
            terms = [e for e in itertools.product(range(d + 1), repeat=self.p) if sum(e) == d]
            out.extend(sorted(terms, reverse=True))
        return tuple(out)

    @property
    def tag(self):
        f = self.family
        if f == "piecewise_affine":
            return f"piecewise_affine(p={self.p},I={self.I},J={self.J})"
        if f == "polynomial":
            return f"polynomial(p={self.p},degree={self.degree})"
        if f == "feedforward_nn":
            w = ",".join(map(str, self.widths))
            return (f"feedforward_nn(p={self.p},widths=[{w}],activation={self.activation},"
                    f"output_activation={self.output_activation})")
        return f"{f}(p={self.p})"

    @property
    def parameter_linear(self):
        return self.family in PARAMETER_LINEAR

    def features(self, X):
        """Design matrix of a parameter-linear family: ``f(X, theta) = features(X) @ theta``."""
        X = _as_2d(X, self.p)
        if self.family == "linear":
            return np.column_stack([X, np.ones(len(X))])
        if self.family == "logarithmic":
            _require_positive(X, self.family)
            return np.column_stack([np.ones(len(X)), np.log(X)])
        if self.family == "polynomial":
            E = np.array(self.exponents, dtype=float)  # (d, p)
            return np.prod(X[:, None, :] ** E[None, :, :], axis=2)
        raise ContractError(f"{self.family} is not parameter-linear")

    def to_dict(self):
        d = {"family": self.family, "p": self.p}
        if self.family == "piecewise_affine":
            d.update(I=self.I, J=self.J)
        elif self.family == "polynomial":
            d["degree"] = self.degree
        elif self.family == "feedforward_nn":
            d.update(widths=list(self.widths), activation=self.activation,
                     leaky_slope=self.leaky_slope, output_activation=self.output_activation)
        elif self.family in ("exponential", "power"):
            d["tau"] = self.tau
        return d


class ParamVector:
    """Immutable flat parameter vector bound to a :class:`ModelSpec` layout."""

    __slots__ = ("data", "spec")

    def __init__(self, data, spec: ModelSpec, *, check_domain=True):
        arr = np.array(data, dtype=float).reshape(-1)
        if arr.size != spec.n_params:
            raise ContractError(f"{spec.tag} needs {spec.n_params} parameters, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("parameters must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spec", spec)
        if check_domain and spec.family in ("exponential", "power"):
            if self.block("theta0") < spec.tau:
                raise DomainError(f"theta0 must be >= tau={spec.tau}")

    def __setattr__(self, name, value):
        raise AttributeError("ParamVector is immutable")

    def __len__(self):
        return self.data.size

    def __repr__(self):
        return f"ParamVector({self.spec.tag}, {np.array2string(self.data, precision=4)})"

    def block(self, name):
        for bname, start, shape in self.spec.layout:
            if bname == name:
                size = int(np.prod(shape, dtype=int))
                chunk = self.data[start:start + size]
                return float(chunk[0]) if shape == () else chunk.reshape(shape)
        raise KeyError(name)

    def blocks(self):
        return {name: self.block(name) for name, _, _ in self.spec.layout}

    def to_dict(self):
        return {"layout": self.spec.tag, "model": self.spec.to_dict(),
                "data": [float(v) for v in self.data]}

    @classmethod
    def from_dict(cls, d):
        spec = ModelSpec(**{k: (tuple(v) if k == "widths" else v) for k, v in d["model"].items()})
        if d.get("layout", spec.tag) != spec.tag:
            raise ContractError(f"layout tag {d['layout']!r} does not match {spec.tag!r}")
        return cls(d["data"], spec)


def piecewise_affine_params(spec, a, b, c, d):
    """Pack pieces ``a (I, p), b (I,), c (J, p), d (J,)`` into a :class:`ParamVector`."""
    a = np.asarray(a, float).reshape(spec.I, spec.p)
    c = np.asarray(c, float).reshape(spec.J, spec.p)
    g = np.column_stack([a, np.asarray(b, float).reshape(-1)])
    h = np.column_stack([c, np.asarray(d, float).reshape(-1)])
    return ParamVector(np.concatenate([g.ravel(), h.ravel()]), spec)


def _as_2d(X, p):
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1) if p > 1 or X.size == 1 else X[:, None]
    if X.shape[1] != p:
        raise ContractError(f"expected attributes of dimension {p}, got {X.shape[1]}")
    return X


def _require_positive(X, family):
    if np.any(X <= 0):
        raise DomainError(f"{family} regression needs strictly positive attributes")


def _pieces(spec, data):
    """Affine pieces as ``(I, p+1)`` and ``(J, p+1)`` coefficient arrays."""
    k = spec.p + 1
    blocks = np.asarray(data).reshape(spec.I + spec.J, k)
    return blocks[:spec.I], blocks[spec.I:]


def _activate(name, t, slope):
    if name == "relu":
        return np.maximum(t, 0.0)
    if name == "leaky_relu":
        return np.where(t >= 0, t, slope * t)
    if name == "identity":
        return t
    if name == "tanh":
        return np.tanh(t)
    return 1.0 / (1.0 + np.exp(-t))


def _nn_layers(spec, data):
    blocks = ParamVector(data, spec, check_domain=False).blocks()
    L = len(spec.widths)
    return [(blocks[f"A_{ell}"], blocks[f"b_{ell}"]) for ell in range(1, L + 1)]


def _nn_forward(spec, layers, X):
    s = X
    L = len(layers)
    for ell, (A, b) in enumerate(layers, start=1):
        act = spec.output_activation if ell == L else spec.activation
        s = _activate(act, s @ A.T + b, spec.leaky_slope)
    return s[:, 0]


def _raw_predict(spec, data, X):
    """Evaluate the family formula without checking the parameter domain."""
    data = np.asarray(data, dtype=float)
    f = spec.family
    if spec.parameter_linear:
        return spec.features(X) @ data
    X = _as_2d(X, spec.p)
    if f == "piecewise_affine":
        G, H = _pieces(spec, data)
        Z = np.column_stack([X, np.ones(len(X))])
        return (Z @ G.T).max(axis=1) - (Z @ H.T).max(axis=1)
    if f == "exponential":
        return data[-1] * np.exp(X @ data[:-1])
    if f == "power":
        _require_positive(X, f)
        return data[0] * np.exp(np.log(X) @ data[1:])
    return _nn_forward(spec, _nn_layers(spec, data), X)


def predict_many(spec: ModelSpec, theta: ParamVector, X) -> np.ndarray:
    """``f(x, theta)`` for every row of ``X``."""
    _check_theta(spec, theta)
    return _raw_predict(spec, theta.data, X)


def predict(spec: ModelSpec, theta: ParamVector, x) -> float:
    """``f(x, theta)`` for a single attribute vector."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(predict_many(spec, theta, x)[0])


def _check_theta(spec, theta):
    if not isinstance(theta, ParamVector):
        raise ContractError("theta must be a ParamVector")
    if theta.spec != spec:
        raise ContractError(f"theta has layout {theta.spec.tag}, model is {spec.tag}")


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class HomogeneityReport:
    max_deviation: float
    witness: tuple | None  # (scale, row index into xs) of the worst deviation
    passed: bool


def check_positive_homogeneity(spec, theta, scales, xs, tol=1e-9) -> HomogeneityReport:
    """Largest ``|f(x, a*theta) - a*f(x, theta)|`` over the given scales and inputs.

    The comparison is relative to ``max(1, |a f(x, theta)|)``.  Scaled
    parameters are evaluated even where they leave the family's domain.
    """
    _check_theta(spec, theta)
    X = _as_2d(xs, spec.p)
    base = _raw_predict(spec, theta.data, X)
    worst, witness = 0.0, None
    for a in scales:
        a = float(a)
        if a < 0:
            raise DomainError("scales must be nonnegative")
        with np.errstate(over="ignore", invalid="ignore"):
            dev = np.abs(_raw_predict(spec, a * theta.data, X) - a * base)
            rel = dev / np.maximum(1.0, np.abs(a * base))
        rel = np.where(np.isfinite(rel), rel, np.inf)
        i = int(np.argmax(rel))
        if rel[i] > worst or witness is None:
            worst, witness = float(rel[i]), (a, i)
    passed = worst <= tol
    return HomogeneityReport(worst, None if passed else witness, passed)


def _sample_directions(spec, num_dirs, rng):
    q = spec.n_params
    dirs = []
    while len(dirs) < num_dirs:
        v = rng.standard_normal(q)
        if spec.family in ("exponential", "power"):
            k = spec.n_params - 1 if spec.family == "exponential" else 0
            v[k] = max(v[k], 0.0)
        norm = np.linalg.norm(v)
        if norm > 0:
            dirs.append(v / norm)
    axes = np.vstack([np.eye(q), -np.eye(q)])
    if spec.family in ("exponential", "power"):
        k = spec.n_params - 1 if spec.family == "exponential" else 0
        axes = axes[axes[:, k] >= 0]
    return np.vstack(dirs + [axes])


def probabilistic_condition_estimate(spec, data, delta, num_dirs=1000, seed=0) -> float:
    """Monte-Carlo lower bound on ``sup_{|theta|=1} P(|f(X, theta)| < delta)``.

    Unit directions are Gaussian draws normalised to the sphere (clipped onto
    ``theta0 >= 0`` for the exponential and power families), plus the signed
    coordinate axes.  Returns the largest weighted frequency found.
    """
    if num_dirs < 1 or delta <= 0:
        raise DomainError("need num_dirs >= 1 and delta > 0")
    rng = np.random.default_rng(seed)
    best = 0.0
    for theta in _sample_directions(spec, num_dirs, rng):
        with np.errstate(over="ignore", invalid="ignore"):
            vals = _raw_predict(spec, theta, data.X)
        best = max(best, float(data.weights[np.abs(vals) < delta].sum()))
    return min(best, 1.0)


# --------------------------------------------------------------------------
# difference-of-convex split of the loss


def supports_dc(spec: ModelSpec, loss: LossSpec) -> bool:
    if spec.parameter_linear:
        return True
    return spec.family == "piecewise_affine" and loss.kind == "absolute"


def require_dc(spec, loss):
    if not supports_dc(spec, loss):
        raise UnsupportedCombinationError(
            f"no DC split for ({spec.family}, {loss.kind}); supported: "
            f"{'/'.join(PARAMETER_LINEAR)} with any loss, piecewise_affine with absolute")


def dc_arrays(spec, loss, X, y, theta_data):
    """Vectorised DC split: ``phi - psi = L(|f(X, theta) - y|)`` row by row.

    Returns ``phi (n,), phi_grad (n, q), psi (n,), psi_grad (n, q)``.  For
    parameter-linear families ``psi = 0``.  For piecewise affine with the
    absolute loss, with ``g`` and ``h`` the two max-affine parts,
    ``phi = 2 max(g, h + y) - y`` and ``psi = g + h``; argmax ties go to the
    lowest index.
    """
    require_dc(spec, loss)
    theta_data = np.asarray(theta_data, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.parameter_linear:
        Z = spec.features(X)
        val, dval = residual_loss(loss, Z @ theta_data - y)
        zeros = np.zeros_like(Z)
        return val, dval[:, None] * Z, np.zeros_like(val), zeros
    X = _as_2d(X, spec.p)
    n, k = X.shape[0], spec.p + 1
    Z = np.column_stack([X, np.ones(n)])
    G, H = _pieces(spec, theta_data)
    PG, PH = Z @ G.T, Z @ H.T
    ig, ih = PG.argmax(axis=1), PH.argmax(axis=1)
    g, h = PG[np.arange(n), ig], PH[np.arange(n), ih]
    use_g = g >= h + y
    phi = 2.0 * np.maximum(g, h + y) - y
    psi = g + h
    q = spec.n_params
    phi_grad = np.zeros((n, q))
    psi_grad = np.zeros((n, q))
    rows = np.arange(n)
    cols_g = ig[:, None] * k + np.arange(k)
    cols_h = (spec.I + ih)[:, None] * k + np.arange(k)
    psi_grad[rows[:, None], cols_g] += Z
    psi_grad[rows[:, None], cols_h] += Z
    sel = np.where(use_g[:, None], cols_g, cols_h)
    phi_grad[rows[:, None], sel] = 2.0 * Z
    return phi, phi_grad, psi, psi_grad


def dc_components(spec, loss, x, y, theta):
    """DC split at a single point: ``(phi, phi_subgrad, psi, psi_subgrad)``."""
    _check_theta(spec, theta)
    X = np.asarray(x, dtype=float).reshape(1, -1)
    phi, dphi, psi, dpsi = dc_arrays(spec, loss, X, np.array([float(y)]), theta.data)
    return float(phi[0]), dphi[0], float(psi[0]), dpsi[0]


# --------------------------------------------------------------------------
# homogeneous reparameterisation of feedforward nets


def _signed_pow(a, e):
    return np.sign(a) * np.abs(a) ** e


def _nn_transform(theta, weight_exp, bias_exp):
    spec = theta.spec
    if spec.family != "feedforward_nn":
        raise ContractError("reparameterisation applies to feedforward_nn only")
    for act in (spec.activation, spec.output_activation):
        if act not in HOMOGENEOUS_ACTIVATIONS:
            raise UnsupportedCombinationError(f"activation {act!r} is not positively homogeneous")
    L = len(spec.widths)
    out = np.array(theta.data)
    for name, start, shape in spec.layout:
        size = int(np.prod(shape, dtype=int))
        ell = int(name.split("_")[1])
        e = weight_exp(L) if name.startswith("A") else bias_exp(L, ell)
        out[start:start + size] = _signed_pow(out[start:start + size], e)
    return ParamVector(out, spec)


def nn_reparam(theta: ParamVector) -> ParamVector:
    """Map ``A -> sign(A)|A|^L`` and layer-``l`` biases ``b -> sign(b)|b|^(L/l)``."""
    return _nn_transform(theta, lambda L: float(L), lambda L, ell: L / ell)


def nn_reparam_inverse(theta: ParamVector) -> ParamVector:
    return _nn_transform(theta, lambda L: 1.0 / L, lambda L, ell: ell / L)


def reparam_predict_many(spec: ModelSpec, C: ParamVector, X) -> np.ndarray:
    """Evaluate the reparameterised net ``g(x, C)``, positively homogeneous in ``C``."""
    _check_theta(spec, C)
    return _nn_forward(spec, _nn_layers(spec, nn_reparam_inverse(C).data), _as_2d(X, spec.p))
