"""scikit-learn style wrapper around :func:`incvar.solver.fit_incvar`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import DataSet
from .losses import LossSpec
from .models import ModelSpec, predict_many
from .riskcore import TrimLevels
from .solver import SolveConfig, fit_incvar


class InCVaRRegressor(RegressorMixin, BaseEstimator):
    """Regression by minimising the interval CVaR of the losses.

    The losses between the ``alpha`` and ``beta`` quantiles are averaged, so
    the smallest ``alpha`` and largest ``1 - beta`` fractions are ignored.

    Parameters
    ----------
    model : {"piecewise_affine", "linear", "polynomial", "logarithmic"}
    n_convex, n_concave : int
        Number of affine pieces in the two max-affine parts (piecewise_affine).
    degree : int
        Polynomial degree (polynomial).
    loss : {"absolute", "squared", "huber"}
    huber_delta : float or None
    alpha, beta : float
        Trimming levels, ``0 <= alpha < beta <= 1``.
    restarts, max_iter, tol, init_scale, smoothing_eps :
        Solver settings, see :class:`incvar.solver.SolveConfig`.
    random_state : int
    n_jobs : int

    Attributes
    ----------
    coef_ : ParamVector
    objective_ : float
    report_ : SolveReport
    """

    def __init__(self, model="piecewise_affine", n_convex=2, n_concave=2, degree=2,
                 loss="absolute", huber_delta=None, alpha=0.05, beta=0.95, restarts=20,
                 max_iter=200, tol=1e-8, init_scale=1.0, smoothing_eps=1e-3,
                 random_state=0, n_jobs=1):
        self.model = model
        self.n_convex = n_convex
        self.n_concave = n_concave
        self.degree = degree
        self.loss = loss
        self.huber_delta = huber_delta
        self.alpha = alpha
        self.beta = beta
        self.restarts = restarts
        self.max_iter = max_iter
        self.tol = tol
        self.init_scale = init_scale
        self.smoothing_eps = smoothing_eps
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _model_spec(self, p):
        if self.model == "piecewise_affine":
            return ModelSpec("piecewise_affine", p=p, I=self.n_convex, J=self.n_concave)
        if self.model == "polynomial":
            return ModelSpec("polynomial", p=p, degree=self.degree)
        return ModelSpec(self.model, p=p)

    def fit(self, X, y, sample_weight=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        w = None
        if sample_weight is not None:
            w = np.asarray(sample_weight, dtype=float)
            w = w / w.sum()
        self.model_spec_ = self._model_spec(X.shape[1])
        loss = LossSpec(self.loss, self.huber_delta if self.loss == "huber" else None)
        cfg = SolveConfig(restarts=self.restarts, max_outer_iters=self.max_iter,
                          outer_tol=self.tol, init_scale=self.init_scale,
                          smoothing_eps=self.smoothing_eps, seed=int(self.random_state or 0),
                          n_jobs=self.n_jobs)
        self.report_ = fit_incvar(DataSet(X, y, w), self.model_spec_, loss,
                                  TrimLevels(self.alpha, self.beta), cfg)
        self.coef_ = self.report_.best_theta
        self.objective_ = self.report_.best_objective
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return predict_many(self.model_spec_, self.coef_, X)
