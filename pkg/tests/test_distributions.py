import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from d3re.distributions import (EIGHT_GAUSSIAN_MEANS, EIGHT_GAUSSIAN_STD, TOY_BOX, TOY_NAMES,
                                GaussianSpec, checkerboard_black, dequantize, gaussian_kl,
                                gaussian_logpdf, gaussian_sample, toy2d_sample)
from d3re.exceptions import ConfigurationError


def test_sample_mean_isotropic(rng):
    x = gaussian_sample(GaussianSpec(np.zeros(2), 1.0), 100_000, rng)
    assert np.all(np.abs(x.mean(0)) < 0.02)


def test_degenerate_covariance_rejected():
    with pytest.raises(ConfigurationError):
        GaussianSpec(np.zeros(2), 0.0)
    with pytest.raises(ConfigurationError):
        GaussianSpec(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), "full")


def test_block_correlation(rng):
    x = gaussian_sample(GaussianSpec.correlated_blocks(8, 0.8), 100_000, rng)
    for k in range(4):
        r = np.corrcoef(x[:, 2 * k], x[:, 2 * k + 1])[0, 1]
        assert 0.78 <= r <= 0.82
    assert abs(np.corrcoef(x[:, 1], x[:, 2])[0, 1]) < 0.02


def test_logpdf_values():
    n01, n11 = GaussianSpec([0.0], 1.0), GaussianSpec([1.0], 1.0)
    assert gaussian_logpdf(n01, [0.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)
    assert gaussian_logpdf(n11, [0.0]) - gaussian_logpdf(n01, [0.0]) == pytest.approx(-0.5)


@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=5), st.integers(0, 1000))
def test_diagonal_logpdf_is_sum_of_marginals(variances, seed):
    d = len(variances)
    rng = np.random.default_rng(seed)
    mean, x = rng.normal(size=d), rng.normal(size=d)
    spec = GaussianSpec(mean, np.array(variances), "diagonal")
    parts = sum(stats.norm.logpdf(x[i], mean[i], np.sqrt(variances[i])) for i in range(d))
    assert gaussian_logpdf(spec, x) == pytest.approx(parts, rel=1e-12, abs=1e-12)


@given(st.integers(0, 1000))
def test_logpdf_matches_scipy_for_block_and_full(seed):
    rng = np.random.default_rng(seed)
    rho = rng.uniform(-0.95, 0.95)
    spec = GaussianSpec.correlated_blocks(4, rho)
    x = rng.normal(size=(3, 4))
    ref = stats.multivariate_normal(np.zeros(4), spec.dense_cov()).logpdf(x)
    np.testing.assert_allclose(gaussian_logpdf(spec, x), ref, rtol=1e-12)
    A = rng.normal(size=(3, 3))
    full = GaussianSpec(rng.normal(size=3), A @ A.T + np.eye(3), "full")
    np.testing.assert_allclose(gaussian_logpdf(full, x[:, :3]),
                               stats.multivariate_normal(full.mean, full.cov).logpdf(x[:, :3]),
                               rtol=1e-12)


def test_kl_examples():
    n01 = GaussianSpec([0.0], 1.0)
    assert gaussian_kl(n01, n01) == pytest.approx(0.0, abs=1e-14)
    assert gaussian_kl(GaussianSpec([1.0], 1.0), n01) == pytest.approx(0.5)
    kl = gaussian_kl(GaussianSpec.correlated_blocks(8, 0.8), GaussianSpec(np.zeros(8), 1.0))
    assert kl == pytest.approx(-2 * np.log(1 - 0.64), abs=1e-12)
    assert kl == pytest.approx(2.0433, abs=1e-4)


def test_eight_gaussians_near_means(rng):
    x = toy2d_sample("8gaussians", 4, rng)
    d = np.linalg.norm(x[:, None, :] - EIGHT_GAUSSIAN_MEANS[None], axis=2).min(1)
    assert np.all(d < 3 * EIGHT_GAUSSIAN_STD * np.sqrt(2))


def test_checkerboard_occupancy(rng):
    x = toy2d_sample("checkerboard", 1000, rng)
    assert np.all(np.abs(x) <= 4)
    assert np.mean(~checkerboard_black(x)) < 0.02


@pytest.mark.parametrize("name", TOY_NAMES)
def test_toy_determinism_and_bounds(name):
    a = toy2d_sample(name, 2000, np.random.default_rng(7))
    b = toy2d_sample(name, 2000, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)
    assert a.shape == (2000, 2)
    assert np.all(np.abs(a) <= TOY_BOX)


def test_unknown_toy():
    with pytest.raises(ConfigurationError):
        toy2d_sample("spiral", 3, np.random.default_rng(0))


def test_dequantize(rng):
    x = rng.normal(size=(10, 2))
    np.testing.assert_array_equal(dequantize(x, 0.0, rng), x)
    with pytest.raises(ConfigurationError):
        dequantize(x, -1.0, rng)
    base = np.zeros((400_000, 1))
    v = dequantize(base, 1e-5, rng).var()
    assert v == pytest.approx(1e-5, rel=0.2)


def test_dequantized_gaussian_ks(rng):
    eps = 1e-2
    x = dequantize(rng.standard_normal(5000), eps, rng)
    assert stats.kstest(x, "norm", args=(0, np.sqrt(1 + eps))).pvalue > 0.01


def test_convolution_moments(rng):
    spec = GaussianSpec(np.array([1.0, -1.0]), np.array([2.0, 0.5]), "diagonal")
    eps = 0.3
    x = dequantize(gaussian_sample(spec, 100_000, rng), eps, rng)
    np.testing.assert_allclose(x.var(0), [2.3, 0.8], rtol=0.03)
    np.testing.assert_allclose(x.mean(0), spec.mean, atol=0.02)


def _ratio_sup_error(eps, xs):
    # log r' for the dequantized pair: N(1, 1+eps) vs N(0, 1+eps)
    exact = xs - 0.5
    deq = (xs - 0.5) / (1 + eps)
    return np.max(np.abs(np.exp(deq) - np.exp(exact)))


def test_dequantization_error_is_linear_in_eps():
    xs = np.linspace(-3, 4, 141)
    eps = np.array([1e-4, 1e-3, 1e-2])
    err = np.array([_ratio_sup_error(e, xs) for e in eps])
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert 0.7 <= slope <= 1.3
