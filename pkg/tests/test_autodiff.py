import numpy as np
import pytest
from hypothesis import given, strategies as st

from d3re.autodiff import (Dual, dual_backprop, dual_forward, flatten, init_mlp, mlp_backprop,
                           mlp_forward, mlp_jvp, unflatten)
from d3re.exceptions import ConfigurationError

from conftest import central_diff


def _net(seed, sizes=(3, 5, 4, 2)):
    return init_mlp(list(sizes), np.random.default_rng(seed))


def test_zero_network_outputs_zero():
    p = {k: np.zeros_like(v) for k, v in _net(0).items()}
    x = np.random.default_rng(1).normal(size=(7, 3))
    assert np.all(mlp_forward(p, x) == 0)


def test_identity_single_layer():
    p = {"W0": np.eye(3), "b0": np.zeros(3)}
    x = np.random.default_rng(2).normal(size=(4, 3))
    np.testing.assert_array_equal(mlp_forward(p, x), x)


def test_forward_matches_straight_line_evaluation():
    p = _net(0, (2, 3, 1))
    x = np.array([0.3, -1.2])
    h = [np.tanh(sum(x[i] * p["W0"][i, j] for i in range(2)) + p["b0"][j]) for j in range(3)]
    out = sum(h[j] * p["W1"][j, 0] for j in range(3)) + p["b1"][0]
    assert mlp_forward(p, x)[0, 0] == pytest.approx(out, rel=1e-14)


def test_shape_mismatch_is_configuration_error():
    with pytest.raises(ConfigurationError):
        mlp_forward(_net(0), np.zeros((2, 4)))
    with pytest.raises(ConfigurationError):
        mlp_backprop(_net(0), np.zeros((2, 3)), np.zeros((2, 3)))


def test_single_linear_layer_gradient():
    p = {"W0": np.array([[2.0], [-1.0]]), "b0": np.array([0.5])}
    x = np.array([[3.0, 4.0]])
    grads, _ = mlp_backprop(p, x, np.ones((1, 1)))
    np.testing.assert_array_equal(grads["W0"], x.T)
    np.testing.assert_array_equal(grads["b0"], [1.0])


def test_zero_upstream_gives_zero_gradients():
    p = _net(3)
    grads, gin = mlp_backprop(p, np.ones((5, 3)), np.zeros((5, 2)))
    assert all(np.all(g == 0) for g in grads.values())
    assert np.all(gin == 0)


@given(st.integers(0, 10_000))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = _net(seed)
    x = rng.normal(size=(6, 3))
    up = rng.normal(size=(6, 2))
    grads, gin = mlp_backprop(p, x, up)
    flat = flatten(p)
    fd = central_diff(lambda f: np.sum(up * mlp_forward(unflatten(p, f), x)), flat)
    np.testing.assert_allclose(flatten(grads), fd, rtol=1e-5, atol=1e-8)
    fdx = central_diff(lambda z: np.sum(up * mlp_forward(p, z)), x)
    np.testing.assert_allclose(gin, fdx, rtol=1e-5, atol=1e-8)


def test_linear_layer_jvp():
    W = np.array([[1.0, 2.0], [3.0, -1.0]])
    p = {"W0": W, "b0": np.zeros(2)}
    v = np.array([[0.5, -2.0]])
    out = mlp_jvp(p, Dual(np.ones((1, 2)), v))
    np.testing.assert_allclose(out.tangent, v @ W)


@given(st.integers(0, 10_000))
def test_jvp_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = _net(seed)
    x, v = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    h = 1e-5
    fd = (mlp_forward(p, x + h * v) - mlp_forward(p, x - h * v)) / (2 * h)
    out = mlp_jvp(p, Dual(x, v))
    np.testing.assert_allclose(out.tangent, fd, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(out.primal, mlp_forward(p, x))


@given(st.integers(0, 1000), st.floats(-5, 5))
def test_jvp_is_linear_in_tangent(seed, a):
    rng = np.random.default_rng(seed)
    p = _net(seed)
    x, v = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    np.testing.assert_allclose(mlp_jvp(p, Dual(x, a * v)).tangent,
                               a * mlp_jvp(p, Dual(x, v)).tangent, rtol=1e-10, atol=1e-12)


def test_zero_tangent():
    out = mlp_jvp(_net(1), Dual(np.ones((2, 3)), np.zeros((2, 3))))
    assert np.all(out.tangent == 0)


@given(st.integers(0, 10_000))
def test_dual_backprop_matches_finite_differences(seed):
    # loss depends on both the output and its tangent
    rng = np.random.default_rng(seed)
    p = _net(seed)
    x, v = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    a, b = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))

    def loss(params):
        out, _ = dual_forward(params, x, v)
        return np.sum(a * out.primal) + np.sum(b * out.tangent ** 2)

    out, cache = dual_forward(p, x, v)
    grads, _ = dual_backprop(p, cache, a, 2 * b * out.tangent)
    fd = central_diff(lambda f: loss(unflatten(p, f)), flatten(p))
    np.testing.assert_allclose(flatten(grads), fd, rtol=1e-5, atol=1e-7)


def test_outputs_finite_for_large_inputs():
    out = mlp_forward(_net(0), np.full((2, 3), 1e6))
    assert np.all(np.isfinite(out))
