"""Entropic optimal transport on mini-batches.

The Sinkhorn solver works with dual potentials ``f, g`` and a stabilised
kernel ``exp((f_i + g_j - C_ij) / reg)``; scaling vectors are folded back into
the potentials (absorbed) whenever they drift far from one, so the iteration
stays in the log domain without paying a log-sum-exp per step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigurationError, ConvergenceWarning

_ABSORB_AT = 1e30


@dataclass(frozen=True)
class Coupling:
    P: np.ndarray
    a: np.ndarray
    b: np.ndarray
    iterations: int = 0
    marginal_error: float = 0.0
    converged: bool = True

    @property
    def shape(self):
        return self.P.shape


def cost_matrix(b0, b1):
    """Pairwise squared Euclidean distances ``C[i, j] = ||b0[i] - b1[j]||^2``."""
    b0 = np.atleast_2d(np.asarray(b0, dtype=np.float64))
    b1 = np.atleast_2d(np.asarray(b1, dtype=np.float64))
    if b0.shape[1] != b1.shape[1]:
        raise ConfigurationError(f"dimension mismatch: {b0.shape[1]} vs {b1.shape[1]}")
    diff = b0[:, None, :] - b1[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _marginal(m, n):
    if m is None:
        return np.full(n, 1.0 / n)
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (n,) or np.any(m <= 0) or abs(m.sum() - 1.0) > 1e-9:
        raise ConfigurationError("marginals must be strictly positive and sum to 1")
    return m


def sinkhorn(cost, a=None, b=None, reg=1.0, max_iter=1000, tol=1e-8, check_every=10):
    """Entropic OT plan minimising ``<P, C> - reg * H(P)`` with marginals ``a, b``.

    ``tol`` bounds the L1 error of the row plus column marginals.  When it is
    not reached within ``max_iter`` iterations a :class:`ConvergenceWarning`
    is emitted and the returned coupling has ``converged=False``.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2:
        raise ConfigurationError("cost must be a matrix")
    if not reg > 0:
        raise ConfigurationError("reg must be positive")
    n0, n1 = C.shape
    a, b = _marginal(a, n0), _marginal(b, n1)
    log_a, log_b = np.log(a), np.log(b)

    g = np.zeros(n1)
    f = reg * (log_a - logsumexp(-C / reg, axis=1))
    g = reg * (log_b - logsumexp((f[:, None] - C) / reg, axis=0))
    K = np.exp((f[:, None] + g[None, :] - C) / reg)
    u, v = np.ones(n0), np.ones(n1)
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        Kv = K @ v
        u = a / Kv
        Ku = K.T @ u
        v = b / Ku
        if (not np.all(np.isfinite(u)) or not np.all(np.isfinite(v))
                or u.max() > _ABSORB_AT or v.max() > _ABSORB_AT or u.min() < 1 / _ABSORB_AT
                or v.min() < 1 / _ABSORB_AT):
            f, g = _absorb(C, f, g, u, v, reg, log_a, log_b)
            K = np.exp((f[:, None] + g[None, :] - C) / reg)
            u, v = np.ones(n0), np.ones(n1)
        if it % check_every == 0 or it == max_iter:
            P = u[:, None] * K * v[None, :]
            err = np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum()
            if err <= tol:
                break
    P = u[:, None] * K * v[None, :]
    err = float(np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum())
    converged = err <= tol
    if not converged:
        warnings.warn(f"Sinkhorn stopped after {it} iterations with marginal error {err:.3e}",
                      ConvergenceWarning, stacklevel=2)
    return Coupling(P, a, b, it, err, converged)


def _absorb(C, f, g, u, v, reg, log_a, log_b):
    with np.errstate(divide="ignore", invalid="ignore"):
        lu, lv = np.log(u), np.log(v)
    if np.all(np.isfinite(lu)) and np.all(np.isfinite(lv)):
        return f + reg * lu, g + reg * lv
    # scalings broke down; redo one exact log-domain sweep
    f = reg * (log_a - logsumexp((g[None, :] - C) / reg, axis=1))
    g = reg * (log_b - logsumexp((f[:, None] - C) / reg, axis=0))
    return f, g


def entropy(P):
    P = np.asarray(P, dtype=np.float64)
    nz = P > 0
    return float(-np.sum(P[nz] * np.log(P[nz])))


def entropic_objective(P, cost, reg):
    """``sum(P * C) - reg * H(P)`` with ``0 log 0 = 0``."""
    P = P.P if isinstance(P, Coupling) else np.asarray(P, dtype=np.float64)
    return float(np.sum(P * np.asarray(cost)) - reg * entropy(P))


def independent_coupling(a, b):
    return np.outer(a, b)


def sample_coupling(P, b0, b1, n, rng):
    """Draw ``n`` index pairs ``(i, j)`` with probability ``P[i, j]`` (with replacement).

    Returns ``(x0_hat, x1_hat, i, j)``.
    """
    P = P.P if isinstance(P, Coupling) else np.asarray(P, dtype=np.float64)
    b0, b1 = np.atleast_2d(b0), np.atleast_2d(b1)
    if P.shape != (b0.shape[0], b1.shape[0]):
        raise ConfigurationError(f"coupling shape {P.shape} does not match batches")
    p = np.clip(P.ravel(), 0.0, None)
    cdf = np.cumsum(p)
    flat = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    flat = np.minimum(flat, p.size - 1)
    i, j = np.divmod(flat, P.shape[1])
    return b0[i], b1[j], i, j


def method_transport_loss(kind, b0, b1, gamma2=0.5, eps=1e-5, rng=None, tol=1e-8):
    """Entropic objective (``reg = 2 gamma2``) of the endpoint plan an interpolant uses.

    DI moves each ``b0[i]`` along one deterministic path to ``b1[i]``, so its
    plan is the diagonal pairing.  The stochastic bridges (DBI, DDBI) spread
    every start point over the whole target batch: plan ``a x b``.  DDBI and
    DSBI see dequantized endpoints; DSBI re-pairs them with Sinkhorn.
    """
    b0 = np.atleast_2d(np.asarray(b0, dtype=np.float64))
    b1 = np.atleast_2d(np.asarray(b1, dtype=np.float64))
    reg = 2.0 * gamma2
    if kind in ("DDBI", "DSBI") and eps > 0:
        if rng is None:
            raise ConfigurationError("dequantized kinds need an rng")
        b0 = b0 + np.sqrt(eps) * rng.standard_normal(b0.shape)
        b1 = b1 + np.sqrt(eps) * rng.standard_normal(b1.shape)
    C = cost_matrix(b0, b1)
    n0, n1 = C.shape
    if kind == "DI":
        if n0 != n1:
            raise ConfigurationError("DI pairs rows one to one; batch sizes must match")
        P = np.eye(n0) / n0
    elif kind in ("DBI", "DDBI"):
        P = independent_coupling(_marginal(None, n0), _marginal(None, n1))
    elif kind == "DSBI":
        P = sinkhorn(C, reg=reg, tol=tol).P
    else:
        raise ConfigurationError(f"unknown interpolant {kind!r}")
    return entropic_objective(P, C, reg)
