"""Interpolant schedules, bridge kernels and their time scores.

Every interpolant has the form ``x_t = alpha_t x0' + beta_t x1' + sigma_t z``
with ``sigma_t^2 = t(1-t) gamma2 + (alpha_t^2 + beta_t^2) eps``.  The kinds
differ only in which of ``gamma2`` and ``eps`` are active:

=====  ==========  ======
kind   gamma2      eps
=====  ==========  ======
DI     0           0
DBI    config      0
DDBI   config      config
DSBI   config      config  (linear schedule, endpoints re-paired by OT)
=====  ==========  ======
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .distributions import GaussianSpec
from .exceptions import ConfigurationError, DomainError, UndefinedScoreError

VP_ALPHA_FLOOR = 1e-6
KINDS = ("DI", "DBI", "DDBI", "DSBI")


class Coefficients(NamedTuple):
    alpha: float
    beta: float
    dalpha: float
    dbeta: float


@dataclass(frozen=True)
class Schedule:
    """``kind`` is ``"linear"``, ``"vp"`` or ``"tre"``.

    ``vp`` uses ``beta_min``/``beta_max``.  ``tre`` takes an increasing grid
    ``eta`` on ``[0, 1]`` with ``eta[0] = 0`` and ``eta[-1] = 1`` placed at
    equally spaced times ``k / M``; ``beta_t`` is the piecewise-linear
    interpolant of that grid and ``alpha_t = sqrt(1 - beta_t^2)``.
    """

    kind: str = "linear"
    beta_min: float = 0.1
    beta_max: float = 20.0
    eta: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("linear", "vp", "tre"):
            raise ConfigurationError(f"unknown schedule {self.kind!r}")
        if self.kind == "vp" and not (0 <= self.beta_min < self.beta_max):
            raise ConfigurationError("vp schedule needs 0 <= beta_min < beta_max")
        if self.kind == "tre":
            eta = np.asarray(self.eta, dtype=float)
            if (eta.ndim != 1 or eta.size < 2 or eta[0] != 0.0 or eta[-1] != 1.0
                    or np.any(np.diff(eta) <= 0)):
                raise ConfigurationError("tre grid must increase strictly from 0 to 1")
            object.__setattr__(self, "eta", tuple(eta.tolist()))

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "vp":
            d.update(beta_min=self.beta_min, beta_max=self.beta_max)
        if self.kind == "tre":
            d["eta"] = list(self.eta)
        return d


def schedule_eval(s, t):
    """Return ``(alpha, beta, dalpha/dt, dbeta/dt)`` at time ``t``.

    ``t`` may be a scalar or an array; the fields then broadcast.
    """
    coef = _schedule_eval(s, np.asarray(t, dtype=np.float64))
    if np.ndim(t) == 0:
        return Coefficients(*(float(v) for v in coef))
    return coef


def _schedule_eval(s, t_arr):
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError("t must lie in [0, 1]")
    if s.kind == "linear":
        one = np.ones_like(t_arr)
        return Coefficients(1.0 - t_arr, t_arr.copy(), -one, one)
    if s.kind == "vp":
        db = s.beta_max - s.beta_min
        expo = -0.25 * db * t_arr ** 2 - 0.5 * s.beta_min * t_arr
        alpha = np.exp(expo)
        dalpha = alpha * (-0.5 * db * t_arr - 0.5 * s.beta_min)
        clamped = alpha < VP_ALPHA_FLOOR
        alpha = np.where(clamped, VP_ALPHA_FLOOR, alpha)
        dalpha = np.where(clamped, 0.0, dalpha)
        beta = np.sqrt(1.0 - alpha ** 2)
        safe = np.where(beta > 0, beta, 1.0)
        dbeta = np.where(beta > 0, -alpha * dalpha / safe, np.inf)
        # beta'(0) is infinite for the VP form; report the one-sided limit
        return Coefficients(alpha, beta, dalpha, dbeta)
    eta = np.asarray(s.eta)
    grid = np.linspace(0.0, 1.0, eta.size)
    beta = np.interp(t_arr, grid, eta)
    seg = np.clip(np.searchsorted(grid, t_arr, side="right") - 1, 0, eta.size - 2)
    dbeta = (eta[seg + 1] - eta[seg]) / (grid[seg + 1] - grid[seg])
    alpha = np.sqrt(np.clip(1.0 - beta ** 2, 0.0, None))
    safe = np.where(alpha > 0, alpha, 1.0)
    dalpha = np.where(alpha > 0, -beta * dbeta / safe, -np.inf)
    return Coefficients(alpha, beta, dalpha, dbeta)


@dataclass(frozen=True)
class InterpolantConfig:
    kind: str = "DDBI"
    schedule: Schedule = field(default_factory=Schedule)
    gamma2: float = 0.5
    eps: float = 1e-5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown interpolant {self.kind!r}; choose from {KINDS}")
        if self.gamma2 < 0 or self.eps < 0:
            raise ConfigurationError("gamma2 and eps must be non-negative")
        if self.kind == "DSBI" and self.schedule.kind != "linear":
            raise ConfigurationError("DSBI requires the linear schedule")

    @property
    def effective_gamma2(self):
        return 0.0 if self.kind == "DI" else self.gamma2

    @property
    def effective_eps(self):
        return self.eps if self.kind in ("DDBI", "DSBI") else 0.0

    @property
    def uses_coupling(self):
        return self.kind == "DSBI"

    def to_dict(self):
        return {"kind": self.kind, "schedule": self.schedule.to_dict(),
                "gamma2": self.gamma2, "eps": self.eps}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sched = d.pop("schedule", {}) or {}
        if isinstance(sched, str):
            sched = {"kind": sched}
        return cls(schedule=Schedule(**sched), **d)


def sigma2(c, t):
    """Bridge variance and its time derivative, ``(sigma^2, d sigma^2 / dt)``."""
    a, b, da, db = schedule_eval(c.schedule, t)
    g2, eps = c.effective_gamma2, c.effective_eps
    t = np.asarray(t, dtype=np.float64)
    var = t * (1.0 - t) * g2 + (a * a + b * b) * eps
    if c.schedule.kind == "linear":
        dnorm = 2.0 * (a * da + b * db)
    else:
        # alpha^2 + beta^2 == 1 for the variance-preserving schedules
        dnorm = np.zeros_like(t)
    dvar = (1.0 - 2.0 * t) * g2 + dnorm * eps
    if var.ndim == 0:
        return float(var), float(dvar)
    return var, dvar


class PathPoint(NamedTuple):
    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray
    z: np.ndarray
    xt: np.ndarray


def sample_path(c, x0, x1, t, rng=None, z=None):
    """Draw ``x_t`` from the bridge kernel pinned at ``(x0, x1)``.

    ``x0`` and ``x1`` are matching rows; ``t`` is a scalar or one time per row.
    Passing ``z`` fixes the Gaussian draw.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ConfigurationError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    t = np.asarray(t, dtype=np.float64)
    a, b, _, _ = schedule_eval(c.schedule, t)
    var, _ = sigma2(c, t)
    if z is None:
        z = rng.standard_normal(x0.shape)
    z = np.asarray(z, dtype=np.float64)
    if x0.ndim == 2 and t.ndim == 1:
        a, b, var = a[:, None], b[:, None], np.asarray(var)[:, None]
    xt = a * x0 + b * x1 + np.sqrt(var) * z
    return PathPoint(x0, x1, t, z, xt)


def conditional_time_score(c, p):
    """``d/dt log N(x_t; alpha x0 + beta x1, sigma^2 I)`` along the drawn path."""
    _, _, da, db = schedule_eval(c.schedule, p.t)
    var, dvar = sigma2(c, p.t)
    var, dvar = np.asarray(var), np.asarray(dvar)
    if np.any(var <= 0):
        raise UndefinedScoreError("bridge variance is zero; the time score is undefined (DI?)")
    x0, x1, z = np.atleast_2d(p.x0), np.atleast_2d(p.x1), np.atleast_2d(p.z)
    d = x0.shape[-1]
    da, db = np.reshape(da, (-1, 1)), np.reshape(db, (-1, 1))
    sig = np.sqrt(var)
    drift = np.sum((da * x0 + db * x1) * z, axis=-1)
    out = -0.5 * d * dvar / var + drift / sig + 0.5 * dvar * np.sum(z * z, axis=-1) / var
    return float(out[0]) if np.ndim(p.x0) == 1 else out


def _cov_pieces(c, q0, q1, t):
    """Marginal mean/cov and their time derivatives; ``t`` scalar or per-row."""
    a, b, da, db = schedule_eval(c.schedule, t)
    var, dvar = sigma2(c, t)
    S0, S1 = q0.dense_cov(), q1.dense_cov()
    eye = np.eye(q0.dim)
    if np.ndim(t) == 0:
        mean = a * q0.mean + b * q1.mean
        dmean = da * q0.mean + db * q1.mean
        cov = a * a * S0 + b * b * S1 + var * eye
        dcov = 2 * a * da * S0 + 2 * b * db * S1 + dvar * eye
        return mean, dmean, cov, dcov
    col = lambda v: np.asarray(v)[:, None]
    mat = lambda v: np.asarray(v)[:, None, None]
    mean = col(a) * q0.mean + col(b) * q1.mean
    dmean = col(da) * q0.mean + col(db) * q1.mean
    cov = mat(a * a) * S0 + mat(b * b) * S1 + mat(var) * eye
    dcov = mat(2 * a * da) * S0 + mat(2 * b * db) * S1 + mat(dvar) * eye
    return mean, dmean, cov, dcov


def gaussian_marginal(c, q0, q1, t):
    """Law of ``x_t`` for independent Gaussian endpoints."""
    if q0.dim != q1.dim:
        raise ConfigurationError("endpoint dimensions differ")
    mean, _, cov, _ = _cov_pieces(c, q0, q1, float(t))
    return GaussianSpec(mean, cov, "full")


def gaussian_marginal_time_score(c, q0, q1, t, x):
    """``d/dt log q_t(x)`` for the Gaussian marginal of :func:`gaussian_marginal`.

    ``t`` is a scalar or one time per row of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    mean, dmean, cov, dcov = _cov_pieces(c, q0, q1, t if np.ndim(t) else float(t))
    r = X - mean
    P = np.linalg.inv(cov)
    if np.ndim(t) == 0:
        Pr = r @ P
        out = (-0.5 * np.trace(P @ dcov) + Pr @ dmean
               + 0.5 * np.einsum("ni,ij,nj->n", Pr, dcov, Pr))
    else:
        Pr = np.einsum("nij,nj->ni", P, r)
        out = (-0.5 * np.einsum("nij,nji->n", P, dcov) + np.sum(Pr * dmean, axis=1)
               + 0.5 * np.einsum("ni,nij,nj->n", Pr, dcov, Pr))
    return float(out[0]) if single else out
