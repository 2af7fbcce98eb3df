"""Turning a time-score model into log ratios, mutual information and densities.

``log r(x) = integral_0^1 s(x, t) dt``.  Because the integrand does not couple
back into ``x``, fixed-node Gauss-Legendre quadrature is the default; RK4 and
adaptive Dormand-Prince (RK45) are kept for function-evaluation (NFE)
comparisons.  NFE is counted per point: one score evaluation at one time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .distributions import gaussian_logpdf
from .exceptions import ConfigurationError, IntegrationError
from .scorenet import ScoreModel, time_score

INTEGRATORS = ("gauss-legendre", "rk4", "rk45")


@dataclass(frozen=True)
class Integrator:
    kind: str = "gauss-legendre"
    nodes: int = 64
    steps: int = 128
    rtol: float = 1e-5
    atol: float = 1e-7
    max_nfe: int = 100_000

    def __post_init__(self):
        if self.kind not in INTEGRATORS:
            raise ConfigurationError(f"unknown integrator {self.kind!r}; choose from {INTEGRATORS}")
        if self.nodes < 1 or self.steps < 1:
            raise ConfigurationError("nodes and steps must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class EstimateReport:
    log_ratio: np.ndarray
    nfe: np.ndarray
    integrator: Integrator


def as_score_fn(m):
    """Wrap a model (or a callable ``f(x, t)``) as a batched scalar time score."""
    if isinstance(m, ScoreModel):
        return lambda x, t: time_score(m, x, t)
    return m


def _gauss_legendre(fn, X, n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    ts = 0.5 * (nodes + 1.0)
    total = np.zeros(X.shape[0])
    for t, w in zip(ts, weights):
        total += 0.5 * w * fn(X, t)
    return total, np.full(X.shape[0], n)


def _rk4(fn, X, steps):
    h = 1.0 / steps
    total = np.zeros(X.shape[0])
    for k in range(steps):
        t = k * h
        k1 = fn(X, t)
        k2 = fn(X, t + 0.5 * h)
        k3 = fn(X, t + 0.5 * h)
        k4 = fn(X, min(t + h, 1.0))
        total += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return total, np.full(X.shape[0], 4 * steps)


def _rk45_point(fn, x, integ):
    count = [0]

    def rhs(t, y):
        count[0] += 1
        if count[0] > integ.max_nfe:
            raise IntegrationError("function-evaluation budget exhausted", partial=y[0], t_reached=t)
        return np.atleast_1d(fn(x[None, :], float(np.clip(t, 0.0, 1.0))))

    sol = solve_ivp(rhs, (0.0, 1.0), [0.0], method="RK45", rtol=integ.rtol, atol=integ.atol)
    if sol.status != 0:
        raise IntegrationError(f"adaptive integration failed: {sol.message}",
                               partial=float(sol.y[0, -1]), t_reached=float(sol.t[-1]))
    return float(sol.y[0, -1]), count[0]


def integrate_logratio(m, x, integ=None):
    """Integrate the time score over ``[0, 1]`` at each row of ``x``.

    Returns ``(log_ratio, nfe)``; both are arrays for a batch and scalars for a
    single point.
    """
    integ = integ or Integrator()
    fn = as_score_fn(m)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if integ.kind == "gauss-legendre":
        val, nfe = _gauss_legendre(fn, X, integ.nodes)
    elif integ.kind == "rk4":
        val, nfe = _rk4(fn, X, integ.steps)
    else:
        pairs = [_rk45_point(fn, xi, integ) for xi in X]
        val = np.array([p[0] for p in pairs])
        nfe = np.array([p[1] for p in pairs])
    if single:
        return float(val[0]), int(nfe[0])
    return val, nfe


def estimate_logratio(m, X, integ=None, chunk=4096):
    integ = integ or Integrator()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    vals, nfes = [], []
    for start in range(0, X.shape[0], chunk):
        v, n = integrate_logratio(m, X[start:start + chunk], integ)
        vals.append(v)
        nfes.append(n)
    return EstimateReport(np.concatenate(vals), np.concatenate(nfes), integ)


def estimate_mi(m, samples, integ=None):
    """Mutual information as the mean log ratio over samples of the joint (``q1``).

    Returns ``(estimate, standard error, EstimateReport)``.
    """
    rep = estimate_logratio(m, samples, integ)
    lr = rep.log_ratio
    stderr = float(lr.std(ddof=1) / np.sqrt(lr.size)) if lr.size > 1 else float("nan")
    return float(lr.mean()), stderr, rep


def log_density(m, x, q0, integ=None):
    """``log q1(x) = log r(x) + log q0(x)`` for an analytic reference ``q0``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        lr, _ = integrate_logratio(m, x, integ)
        return lr + gaussian_logpdf(q0, x)
    rep = estimate_logratio(m, x, integ)
    return rep.log_ratio + gaussian_logpdf(q0, x)


def grid_points(bounds, resolution):
    """Row-major 2-D grid: ``xs`` varies slowest.  Returns ``(points, xs, ys)``."""
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    if not (x_lo < x_hi and y_lo < y_hi):
        raise ConfigurationError("grid bounds must satisfy lo < hi")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2:
        raise ConfigurationError("resolution must be >= 2 per axis")
    xs = np.linspace(x_lo, x_hi, int(nx))
    ys = np.linspace(y_lo, y_hi, int(ny))
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1), xs, ys


def density_grid(m, q0, bounds=((-4, 4), (-4, 4)), resolution=100, integ=None):
    """Log density on a grid; ``out[i, j]`` is at ``(xs[i], ys[j])``."""
    pts, xs, ys = grid_points(bounds, resolution)
    vals = log_density(m, pts, q0, integ)
    return vals.reshape(xs.size, ys.size), xs, ys


def grid_mass(logdens, xs, ys):
    """Trapezoid-rule integral of ``exp(logdens)`` over the grid."""
    return float(np.trapezoid(np.trapezoid(np.exp(logdens), ys, axis=1), xs))
