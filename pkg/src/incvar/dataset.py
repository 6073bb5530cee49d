"""Finite weighted empirical distributions of (attribute vector, response) pairs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError, DomainError
from .riskcore import _as_weights


@dataclass(frozen=True, eq=False)
class DataSet:
    """Points ``(X[i], y[i])`` with probability masses ``weights[i]``.

    ``X`` is stored as an ``(n, p)`` array; 1-D input is read as ``p = 1``.
    """

    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DomainError("X must be a nonempty (n, p) array")
        if X.shape[0] != y.shape[0]:
            raise ContractError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("X and y must be finite")
        w = _as_weights(self.weights, y.size)
        for a in (X, y, w):
            a.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]

    def points(self):
        """Joint ``(x, y)`` coordinates as an ``(n, p + 1)`` array."""
        return np.column_stack([self.X, self.y])

    def _concat(self, other, a, b):
        if other.p != self.p:
            raise ContractError(f"cannot mix p={self.p} with p={other.p}")
        return DataSet(
            np.vstack([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            np.concatenate([a * self.weights, b * other.weights]),
        )


def write_csv(data: DataSet, path, *, with_weights=None):
    """Write ``x_1..x_p,y[,weight]`` with 17 significant digits."""
    if with_weights is None:
        with_weights = not np.allclose(data.weights, 1.0 / len(data), rtol=0, atol=1e-15)
    header = [f"x_{j + 1}" for j in range(data.p)] + ["y"]
    if with_weights:
        header.append("weight")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(len(data)):
            row = list(data.X[i]) + [data.y[i]]
            if with_weights:
                row.append(data.weights[i])
            out.writerow([format(float(v), ".17g") for v in row])


def read_csv(path) -> DataSet:
    """Read a dataset written by :func:`write_csv` (weight column optional)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise DomainError(f"{path}: missing 'y' column")
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    if not xcols:
        raise DomainError(f"{path}: no x_1..x_p columns")
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if body.size == 0:
        raise DomainError(f"{path}: no data rows")
    weights = body[:, header.index("weight")] if "weight" in header else None
    return DataSet(body[:, xcols], body[:, header.index("y")], weights)
