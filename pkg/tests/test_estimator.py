import numpy as np
import pytest
from sklearn.base import clone

from quantmirror.estimator import DistributedMirrorDescent


def data(n=10, d=3, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, size=(n, d))


def test_params_round_trip():
    est = DistributedMirrorDescent(loss="l1", tau=3, k=7)
    assert clone(est).get_params() == est.get_params()
    est.set_params(n_iter=50)
    assert est.n_iter == 50


def test_fit_squared_approaches_weighted_mean():
    X = data()
    w = np.linspace(0.5, 1.5, len(X))
    est = DistributedMirrorDescent(n_iter=3000, quantize=False).fit(X, sample_weight=w)
    target = w @ X / w.sum()
    assert np.linalg.norm(est.coef_ - target) < 0.05
    assert est.x_hat_.shape == X.shape
    assert est.relative_error()[-1] < est.relative_error()[9]


def test_fit_l1_and_score():
    X = data(11, 2, seed=1)
    est = DistributedMirrorDescent(loss="l1", n_iter=2000, network="ring").fit(X)
    assert est.score(X) <= 0
    far = est.score(X + 10)
    assert far < est.score(X)
    assert est.predict().shape == (2,)
    assert est.predict(X[:3]).shape == (3, 2)


def test_input_validation():
    with pytest.raises(ValueError):
        DistributedMirrorDescent(loss="huber").fit(data())
    with pytest.raises(ValueError):
        DistributedMirrorDescent().fit(data(), sample_weight=np.ones(3))
    with pytest.raises(ValueError):
        DistributedMirrorDescent().fit(np.array([[np.nan, 1.0]]))
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        DistributedMirrorDescent().predict()
