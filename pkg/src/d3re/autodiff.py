"""Small dense MLP engine with exact reverse- and forward-mode derivatives.

Parameters live in an ordered ``dict`` of float64 arrays named ``W0, b0, W1,
b1, ...`` (layer-major, weights then bias).  Weights are stored as
``(fan_in, fan_out)`` so a batch of row vectors is propagated with ``h @ W + b``.
Hidden layers use ``tanh``; the output layer is linear.

Forward mode is carried by :class:`Dual` (primal plus one tangent of the same
shape).  :func:`dual_forward` / :func:`dual_backprop` push a tangent through
the network and then back-propagate a loss that depends on both the output and
its tangent, which is what losses involving ``d/dt s(x, t)`` or
``v^T grad_x s(x, t) v`` need.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, NonFiniteError

ParamSet = dict  # str -> np.ndarray, insertion ordered


class Dual(NamedTuple):
    primal: np.ndarray
    tangent: np.ndarray


def init_mlp(sizes, rng, zero_output=False):
    """Glorot-uniform weights, zero biases.  ``sizes = [in, h1, ..., out]``."""
    if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
        raise ConfigurationError(f"invalid layer sizes {sizes!r}")
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if zero_output and i == len(sizes) - 2:
            w = np.zeros_like(w)
        params[f"W{i}"] = w.astype(np.float64)
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def n_layers(params):
    return len(params) // 2


def layer_sizes(params):
    sizes = [params["W0"].shape[0]]
    for i in range(n_layers(params)):
        sizes.append(params[f"W{i}"].shape[1])
    return sizes


def flatten(params):
    return np.concatenate([np.ravel(p) for p in params.values()])


def unflatten(template, flat):
    flat = np.asarray(flat, dtype=np.float64)
    out, pos = {}, 0
    for name, p in template.items():
        out[name] = flat[pos:pos + p.size].reshape(p.shape).copy()
        pos += p.size
    if pos != flat.size:
        raise ConfigurationError(f"expected {pos} parameters, got {flat.size}")
    return out


def zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def check_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params["W0"].shape[0]:
        raise ConfigurationError(
            f"input of shape {x.shape} does not match first layer width {params['W0'].shape[0]}")
    return x


def mlp_forward(params, x):
    """Network output for a batch ``x`` of shape ``(n, in)``."""
    h = _as_batch(params, x)
    L = n_layers(params)
    for i in range(L):
        h = h @ params[f"W{i}"] + params[f"b{i}"]
        if i < L - 1:
            h = np.tanh(h)
    return h


def _forward_cache(params, x):
    h = _as_batch(params, x)
    L = n_layers(params)
    acts = [h]
    for i in range(L):
        h = h @ params[f"W{i}"] + params[f"b{i}"]
        if i < L - 1:
            h = np.tanh(h)
        acts.append(h)
    return acts


def mlp_backprop(params, x, upstream):
    """Gradients of ``<upstream, mlp_forward(params, x)>`` w.r.t. every parameter.

    Returns ``(grads, grad_input)``.
    """
    acts = _forward_cache(params, x)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != acts[-1].shape:
        raise ConfigurationError(f"upstream shape {g.shape} != output shape {acts[-1].shape}")
    L = n_layers(params)
    grads = {}
    for i in reversed(range(L)):
        if i < L - 1:
            g = g * (1.0 - acts[i + 1] ** 2)
        grads[f"W{i}"] = acts[i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ params[f"W{i}"].T
    return {k: grads[k] for k in params}, g


def dual_forward(params, x, dx):
    """Forward pass carrying a tangent.  Returns ``(Dual output, cache)``."""
    h = _as_batch(params, x)
    hd = np.asarray(dx, dtype=np.float64).reshape(h.shape)
    L = n_layers(params)
    cache = [(h, hd, None)]
    for i in range(L):
        W = params[f"W{i}"]
        h = h @ W + params[f"b{i}"]
        hd = hd @ W
        ad = hd
        if i < L - 1:
            h = np.tanh(h)
            hd = (1.0 - h * h) * ad
        cache.append((h, hd, ad))
    return Dual(h, hd), cache


def dual_backprop(params, cache, g_out, g_tangent):
    """Reverse pass through :func:`dual_forward`.

    ``g_out`` and ``g_tangent`` are the loss sensitivities to the output and
    to its tangent.  Returns ``(grads, (grad_input, grad_input_tangent))``.
    """
    L = n_layers(params)
    g = np.asarray(g_out, dtype=np.float64)
    gd = np.asarray(g_tangent, dtype=np.float64)
    grads = {}
    for i in reversed(range(L)):
        W = params[f"W{i}"]
        if i < L - 1:
            h, _, ad = cache[i + 1]
            s = 1.0 - h * h
            # d(tanh')/da = -2 h s
            g, gd = g * s - 2.0 * h * s * ad * gd, gd * s
        h_in, hd_in, _ = cache[i]
        grads[f"W{i}"] = h_in.T @ g + hd_in.T @ gd
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ W.T
        gd = gd @ W.T
    return {k: grads[k] for k in params}, (g, gd)


def mlp_jvp(params, inp):
    """Directional derivative of the network output along ``inp.tangent``."""
    out, _ = dual_forward(params, inp.primal, inp.tangent)
    return out
