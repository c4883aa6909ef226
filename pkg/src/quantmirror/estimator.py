"""scikit-learn style wrapper: fit a consensus location estimate across simulated agents."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import MirrorDescentEngine, Schedules
from .geometry import Box, euclidean
from .metrics import relative_error
from .network import make_gossip_cycle, make_metropolis_sequence, ring_edges
from .problems import DistributedProblem


class DistributedMirrorDescent(BaseEstimator):
    """Robust or least-squares location estimate computed by ``N`` networked agents.

    Each row of ``X`` is one agent's private target ``b_j`` and
    ``sample_weight`` supplies the weights ``a_j``.  The agents jointly
    minimize ``(1/N) sum_j a_j ||x - b_j||^2`` (``loss='squared'``) or
    ``(1/N) sum_j a_j ||x - b_j||_1`` (``loss='l1'``) over a box, exchanging
    adaptively quantized messages and using subgradients delayed by ``tau``.

    Attributes
    ----------
    x_hat_ : ndarray of shape (n_agents, n_features)
        Ergodic average of every agent after ``n_iter`` rounds.
    coef_ : ndarray of shape (n_features,)
        Network mean of ``x_hat_``.
    record_ : RunRecord
    problem_ : DistributedProblem
    """

    def __init__(self, loss="squared", lower=None, upper=None, n_iter=1000, tau=0, k=5, quantize=True,
                 a0=1.0, rho1=0.5, b0=1.0, rho2=0.5, network="metropolis", random_state=0):
        self.loss = loss
        self.lower = lower
        self.upper = upper
        self.n_iter = n_iter
        self.tau = tau
        self.k = k
        self.quantize = quantize
        self.a0 = a0
        self.rho1 = rho1
        self.b0 = b0
        self.rho2 = rho2
        self.network = network
        self.random_state = random_state

    def _feasible_set(self, X):
        lo = X.min(axis=0) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), X.shape[1])
        hi = X.max(axis=0) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), X.shape[1])
        hi = np.maximum(hi, lo)
        return Box(lo, hi)

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, ensure_min_samples=1)
        if self.loss not in ("squared", "l1"):
            raise ValueError("loss must be 'squared' or 'l1'")
        if self.network not in ("metropolis", "ring"):
            raise ValueError("network must be 'metropolis' or 'ring'")
        N = X.shape[0]
        w = np.ones(N) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64).reshape(-1)
        if w.shape != (N,):
            raise ValueError("sample_weight must have one entry per row of X")
        X_set = self._feasible_set(X)
        kind = "quadratic" if self.loss == "squared" else "l1"
        self.problem_ = DistributedProblem(kind, X, w, X_set, seed=self.random_state)
        if self.network == "metropolis" or N < 2:
            sched = make_metropolis_sequence(N, seed=self.random_state)
        else:
            sched = make_gossip_cycle(N, ring_edges(N))
        schedules = Schedules(self.a0, self.rho1, self.b0, self.rho2, self.tau)
        engine = MirrorDescentEngine(self.problem_, euclidean(), sched, schedules, k=self.k,
                                     quantize=self.quantize, seed=self.random_state)
        self.record_ = engine.run(self.n_iter)
        self.x_hat_ = self.record_.x_hat
        self.coef_ = self.x_hat_.mean(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X=None):
        """The fitted estimate, repeated once per row of ``X`` (or returned alone)."""
        check_is_fitted(self, "coef_")
        if X is None:
            return self.coef_.copy()
        X = check_array(X)
        return np.tile(self.coef_, (X.shape[0], 1))

    def relative_error(self):
        check_is_fitted(self, "record_")
        return relative_error(self.record_).average

    def score(self, X, y=None, sample_weight=None):
        """Negative weighted loss of ``coef_`` against the rows of ``X``."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        diff = X - self.coef_
        per = np.sum(diff**2, axis=1) if self.loss == "squared" else np.abs(diff).sum(axis=1)
        return -float(per @ w / len(X))
