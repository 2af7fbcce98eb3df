"""scikit-learn style front end.

>>> est = D3RE(interpolant="DSBI", n_iter=2000).fit(X_ref, X_target)
>>> est.log_ratio(X)          # log q_target(x) / q_ref(x)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .distributions import GaussianSpec, gaussian_logpdf
from .estimation import Integrator, estimate_logratio
from .interpolants import InterpolantConfig, Schedule
from .training import TrainConfig, Weighting, empirical_source, train


class D3RE(BaseEstimator):
    """Density-ratio estimator trained by time-score matching along a bridge.

    ``fit(X0, X1)`` learns ``log q1(x) / q0(x)`` from samples of both
    distributions.  Minibatches are drawn with replacement from the supplied
    samples.
    """

    def __init__(self, interpolant="DDBI", gamma2=0.5, eps=1e-5, schedule="linear",
                 loss="L3", hidden=(128, 128), n_freq=8, n_iter=5000, batch_size=512,
                 lr=1e-3, weight_scale=None, boundary_weight=1.0, integrator="gauss-legendre",
                 n_nodes=64, random_state=0):
        self.interpolant = interpolant
        self.gamma2 = gamma2
        self.eps = eps
        self.schedule = schedule
        self.loss = loss
        self.hidden = hidden
        self.n_freq = n_freq
        self.n_iter = n_iter
        self.batch_size = batch_size
        self.lr = lr
        self.weight_scale = weight_scale
        self.boundary_weight = boundary_weight
        self.integrator = integrator
        self.n_nodes = n_nodes
        self.random_state = random_state

    def _train_config(self):
        scale = self.gamma2 if self.weight_scale is None else self.weight_scale
        return TrainConfig(
            loss=self.loss,
            interpolant=InterpolantConfig(self.interpolant, Schedule(self.schedule),
                                          self.gamma2, self.eps),
            batch_size=self.batch_size,
            iterations=self.n_iter,
            lr=self.lr,
            weighting=Weighting("bridge", scale),
            boundary_weight=self.boundary_weight,
            seed=int(self.random_state or 0),
            hidden=tuple(self.hidden),
            n_freq=self.n_freq,
        )

    def fit(self, X0, X1):
        X0 = check_array(X0, dtype=np.float64)
        X1 = check_array(X1, dtype=np.float64)
        if X0.shape[1] != X1.shape[1]:
            raise ValueError(f"X0 has {X0.shape[1]} features but X1 has {X1.shape[1]}")
        self.n_features_in_ = X0.shape[1]
        cfg = self._train_config()
        self.model_, self.history_ = train(cfg, empirical_source(X0), empirical_source(X1),
                                           self.n_features_in_)
        return self

    def _integrator(self):
        return Integrator(self.integrator, nodes=self.n_nodes)

    def log_ratio(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return estimate_logratio(self.model_, X, self._integrator()).log_ratio

    def predict(self, X):
        """Density ratio ``q1(x) / q0(x)``."""
        return np.exp(self.log_ratio(X))

    def transform(self, X):
        return self.log_ratio(X)[:, None]

    def score_samples(self, X, reference=None):
        """``log q1(x)`` given an analytic reference ``q0`` (a :class:`GaussianSpec`).

        Defaults to the standard normal.
        """
        X = check_array(X, dtype=np.float64)
        if reference is None:
            reference = GaussianSpec(np.zeros(X.shape[1]), 1.0)
        return self.log_ratio(X) + gaussian_logpdf(reference, X)

    def mutual_information(self, X_joint):
        """Mean log ratio over samples of ``q1``."""
        return float(np.mean(self.log_ratio(X_joint)))
