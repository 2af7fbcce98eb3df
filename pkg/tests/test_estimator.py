import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from d3re import D3RE
from d3re.distributions import GaussianSpec


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(0)
    X0, X1 = rng.normal(size=(500, 2)), rng.normal(size=(500, 2)) + 0.5
    return D3RE(n_iter=30, batch_size=64, hidden=(8,), n_nodes=8).fit(X0, X1)


def test_params_round_trip():
    est = D3RE(interpolant="DSBI", gamma2=0.3, hidden=(4, 4))
    p = est.get_params()
    assert p["interpolant"] == "DSBI" and p["gamma2"] == 0.3
    c = clone(est).set_params(lr=0.01)
    assert c.lr == 0.01 and est.lr == 1e-3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        D3RE().log_ratio(np.zeros((2, 2)))


def test_input_validation(fitted):
    with pytest.raises(ValueError):
        D3RE(n_iter=1).fit(np.zeros((5, 2)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        fitted.log_ratio(np.zeros((3, 5)))
    with pytest.raises(ValueError):
        fitted.log_ratio(np.array([[np.nan, 0.0]]))


def test_outputs(fitted):
    X = np.random.default_rng(1).normal(size=(7, 2))
    lr = fitted.log_ratio(X)
    assert lr.shape == (7,) and fitted.n_features_in_ == 2
    np.testing.assert_allclose(fitted.predict(X), np.exp(lr))
    assert fitted.transform(X).shape == (7, 1)
    ref = GaussianSpec(np.zeros(2), 1.0)
    np.testing.assert_allclose(fitted.score_samples(X, ref), fitted.score_samples(X))
    assert np.isfinite(fitted.mutual_information(X))
    assert len(fitted.history_.loss) == 30


def test_fit_is_reproducible():
    rng = np.random.default_rng(2)
    X0, X1 = rng.normal(size=(100, 1)), rng.normal(size=(100, 1)) + 1
    a = D3RE(n_iter=10, batch_size=32, hidden=(4,), random_state=5).fit(X0, X1)
    b = D3RE(n_iter=10, batch_size=32, hidden=(4,), random_state=5).fit(X0, X1)
    np.testing.assert_array_equal(a.log_ratio(X0[:5]), b.log_ratio(X0[:5]))
