"""Time-score matching losses, Adam, and the DDBI / DSBI training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .distributions import dequantize, gaussian_sample, toy2d_sample
from .exceptions import ConfigurationError, NonFiniteError
from .interpolants import InterpolantConfig, sample_path
from .rng import streams
from .scorenet import ScoreModel, ScoreNetConfig, _inputs
from .transport import cost_matrix, sample_coupling, sinkhorn

log = logging.getLogger(__name__)

LOSSES = ("L1", "L3", "L4", "Logistic")


@dataclass(frozen=True)
class Weighting:
    """``lambda(t) = scale * t (1 - t)`` (``"bridge"``) or ``lambda(t) = scale`` (``"constant"``)."""

    kind: str = "bridge"
    scale: float = 0.5

    def __post_init__(self):
        if self.kind not in ("bridge", "constant"):
            raise ConfigurationError(f"unknown weighting {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "bridge":
            return self.scale * t * (1.0 - t)
        return np.full_like(t, self.scale)

    def deriv(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "bridge":
            return self.scale * (1.0 - 2.0 * t)
        return np.zeros_like(t)


# ---------------------------------------------------------------------------
# losses; each returns (loss, grads)

def _accumulate(total, grads):
    if total is None:
        return grads
    for k in total:
        total[k] += grads[k]
    return total


def _boundary(m, x, t_value, coef, column=0):
    """Gradient of ``coef * mean(s(x, t_value)[column])``."""
    u, _ = _inputs(m, x, t_value)
    out = ad.mlp_forward(m.params, u)
    up = np.zeros_like(out)
    up[:, column] = coef / out.shape[0]
    grads, _ = ad.mlp_backprop(m.params, u, up)
    return coef * float(out[:, column].mean()), grads


def loss_l1_oracle(m, xt, t, target, weight=None):
    """``mean(lambda(t) |target - s(x_t, t)|^2)`` against known time scores."""
    weight = weight or Weighting("constant", 1.0)
    u, _ = _inputs(m, xt, t)
    out = ad.mlp_forward(m.params, u)
    s = out[:, 0]
    lam = weight(t) * np.ones_like(s)
    resid = s - np.asarray(target, dtype=np.float64)
    n = s.shape[0]
    up = np.zeros_like(out)
    up[:, 0] = 2.0 * lam * resid / n
    grads, _ = ad.mlp_backprop(m.params, u, up)
    return float(np.mean(lam * resid ** 2)), grads


def loss_l3(m, x0, x1, xt, t, weight=None, boundary_weight=1.0):
    """Integration-by-parts time-score loss.

    ``bw * E[lam(0) s(x0, 0) - lam(1) s(x1, 1)] + E[lam s' + lam' s + lam s^2 / 2]``
    where ``s'`` is the time derivative of the model.
    """
    weight = weight or Weighting()
    total, grads = 0.0, None
    for xb, tb, sign in ((x0, 0.0, 1.0), (x1, 1.0, -1.0)):
        coef = sign * boundary_weight * float(weight(tb))
        if coef != 0.0:
            val, g = _boundary(m, xb, tb, coef)
            total += val
            grads = _accumulate(grads, g)
    u, du = _inputs(m, xt, t)
    out, cache = ad.dual_forward(m.params, u, du)
    s, sd = out.primal[:, 0], out.tangent[:, 0]
    lam, dlam = weight(t), weight.deriv(t)
    n = s.shape[0]
    total += float(np.mean(lam * sd + dlam * s + 0.5 * lam * s * s))
    g_out = np.zeros_like(out.primal)
    g_tan = np.zeros_like(out.primal)
    g_out[:, 0] = (dlam + lam * s) / n
    g_tan[:, 0] = lam / n
    g, _ = ad.dual_backprop(m.params, cache, g_out, g_tan)
    return total, _accumulate(grads, g)


def loss_l4_joint(m, x0, x1, xt, t, v, weight=None, boundary_weight=1.0):
    """Joint time/data score loss with a Hutchinson estimate of the divergence term.

    The quadratic term covers the whole joint output ``[s_t, s_x]``; without
    ``lambda s_t^2`` the objective is linear in ``s_t`` and unbounded below.
    The time part is then exactly twice :func:`loss_l3`.
    """
    if m.config.head != "joint":
        raise ConfigurationError("joint loss needs a joint-head model")
    weight = weight or Weighting()
    d = m.config.input_dim
    total, grads = 0.0, None
    for xb, tb, sign in ((x0, 0.0, 1.0), (x1, 1.0, -1.0)):
        coef = 2.0 * sign * boundary_weight * float(weight(tb))
        if coef != 0.0:
            val, g = _boundary(m, xb, tb, coef)
            total += val
            grads = _accumulate(grads, g)
    lam, dlam = weight(t), weight.deriv(t)

    u, du = _inputs(m, xt, t)
    n = u.shape[0]
    out, cache = ad.dual_forward(m.params, u, du)
    st, std, sx = out.primal[:, 0], out.tangent[:, 0], out.primal[:, 1:]
    total += float(np.mean(2 * lam * std + 2 * dlam * st + lam * st * st
                           + lam * np.sum(sx * sx, axis=1)))
    g_out = np.zeros_like(out.primal)
    g_tan = np.zeros_like(out.primal)
    g_out[:, 0] = (2 * dlam + 2 * lam * st) / n
    g_out[:, 1:] = 2 * lam[:, None] * sx / n
    g_tan[:, 0] = 2 * lam / n
    g, _ = ad.dual_backprop(m.params, cache, g_out, g_tan)
    grads = _accumulate(grads, g)

    v = np.asarray(v, dtype=np.float64)
    dv = np.zeros_like(u)
    dv[:, :d] = v
    out, cache = ad.dual_forward(m.params, u, dv)
    quad = np.sum(v * out.tangent[:, 1:], axis=1)
    total += float(np.mean(2 * lam * quad))
    g_tan = np.zeros_like(out.primal)
    g_tan[:, 1:] = 2 * lam[:, None] * v / n
    g, _ = ad.dual_backprop(m.params, cache, np.zeros_like(out.primal), g_tan)
    return total, _accumulate(grads, g)


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def loss_logistic(m, x0, x1):
    """Logistic density-ratio loss with ``log r(x)`` given by the network output."""
    grads = None
    total = 0.0
    for xb, label in ((x0, 0), (x1, 1)):
        u, _ = _inputs(m, xb, 0.0)
        out = ad.mlp_forward(m.params, u)
        f = out[:, 0]
        n = f.shape[0]
        if label == 0:
            total -= float(np.mean(_log_sigmoid(-f)))
            dfl = np.exp(_log_sigmoid(f))
        else:
            total -= float(np.mean(_log_sigmoid(f)))
            dfl = -np.exp(_log_sigmoid(-f))
        up = np.zeros_like(out)
        up[:, 0] = dfl / n
        g, _ = ad.mlp_backprop(m.params, u, up)
        grads = _accumulate(grads, g)
    return total, grads


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params, **kw):
        return cls(ad.zeros_like(params), ad.zeros_like(params), **kw)


def adam_step(state, params, grads, lr):
    """In-place Adam update with bias correction; returns ``(state, params)``."""
    if set(grads) != set(params):
        raise ConfigurationError("gradient names do not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ConfigurationError(f"gradient shape mismatch for {k}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state, params


# ---------------------------------------------------------------------------
# data sources

def gaussian_source(spec):
    return lambda n, rng: gaussian_sample(spec, n, rng)


def toy_source(name):
    return lambda n, rng: toy2d_sample(name, n, rng)


def empirical_source(X):
    X = np.asarray(X, dtype=np.float64)
    return lambda n, rng: X[rng.integers(0, X.shape[0], n)]


# ---------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class TrainConfig:
    loss: str = "L3"
    interpolant: InterpolantConfig = field(default_factory=InterpolantConfig)
    batch_size: int = 512
    iterations: int = 5000
    lr: float = 1e-3
    weighting: Weighting = field(default_factory=Weighting)
    boundary_weight: float = 1.0
    seed: int = 0
    hidden: tuple = (128, 128)
    n_freq: int = 8
    stratified: bool = True
    sinkhorn_max_iter: int = 1000
    sinkhorn_tol: float = 1e-6

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}; choose from {LOSSES}")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def net_config(self, dim):
        if self.loss == "Logistic":
            return ScoreNetConfig(dim, self.hidden, "time", self.n_freq, use_time=False)
        head = "joint" if self.loss == "L4" else "time"
        return ScoreNetConfig(dim, self.hidden, head, self.n_freq)

    def to_dict(self):
        d = asdict(self)
        d["interpolant"] = self.interpolant.to_dict()
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "interpolant" in d:
            d["interpolant"] = InterpolantConfig.from_dict(d["interpolant"])
        if "weighting" in d:
            d["weighting"] = Weighting(**d["weighting"])
        return cls(**d)


@dataclass
class History:
    loss: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def rows(self):
        return [(i, l, w) for i, (l, w) in enumerate(zip(self.loss, self.wall_ms))]


def sample_times(n, rng, stratified=True):
    """``t ~ U(0, 1)``, one draw per stratum when ``stratified``."""
    if stratified:
        return (rng.permutation(n) + rng.random(n)) / n
    return rng.random(n)


def train(cfg, source0, source1, dim, model=None, oracle=None, callback=None):
    """Fit a score model following the DDBI / DSBI training procedure.

    ``source0``/``source1`` are ``f(n, rng) -> (n, dim)`` samplers.  ``oracle``
    (only for ``L1``) maps ``(x_t, t)`` to exact marginal time scores.
    ``callback(iteration, model, loss)`` runs after every step; returning
    ``True`` stops training early.
    """
    rngs = streams(cfg.seed)
    if model is None:
        model = ScoreModel.init(cfg.net_config(dim), rngs["init"], seed=cfg.seed)
    if cfg.loss == "L1" and oracle is None:
        raise ConfigurationError("L1 loss needs an oracle time score")
    ic = cfg.interpolant
    eps = ic.effective_eps
    reg = 2.0 * ic.gamma2
    bridge = replace(ic, kind="DI" if ic.kind == "DI" else "DBI", eps=0.0)
    B = cfg.batch_size
    state = AdamState.zeros(model.params)
    hist = History()
    t_start = time.perf_counter()
    for it in range(cfg.iterations):
        x0 = source0(B, rngs["data0"])
        x1 = source1(B, rngs["data1"])
        if cfg.loss == "Logistic":
            loss, grads = loss_logistic(model, x0, x1)
        else:
            if eps > 0:
                x0 = dequantize(x0, eps, rngs["dequant"])
                x1 = dequantize(x1, eps, rngs["dequant"])
            if ic.uses_coupling:
                cp = sinkhorn(cost_matrix(x0, x1), reg=reg, max_iter=cfg.sinkhorn_max_iter,
                              tol=cfg.sinkhorn_tol)
                x0, x1, _, _ = sample_coupling(cp, x0, x1, B, rngs["coupling"])
            t = sample_times(B, rngs["time"], cfg.stratified)
            # endpoints are already dequantized, so only the bridge noise remains
            path = sample_path(bridge, x0, x1, t, rngs["noise"])
            if cfg.loss == "L3":
                loss, grads = loss_l3(model, x0, x1, path.xt, t, cfg.weighting,
                                      cfg.boundary_weight)
            elif cfg.loss == "L4":
                v = rngs["hutchinson"].standard_normal(x0.shape)
                loss, grads = loss_l4_joint(model, x0, x1, path.xt, t, v, cfg.weighting,
                                            cfg.boundary_weight)
            else:
                loss, grads = loss_l1_oracle(model, path.xt, t, oracle(path.xt, t), cfg.weighting)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise NonFiniteError(f"non-finite loss or gradient at iteration {it} (loss={loss})")
        adam_step(state, model.params, grads, cfg.lr)
        hist.loss.append(loss)
        hist.wall_ms.append(1e3 * (time.perf_counter() - t_start))
        if callback is not None and callback(it, model, loss):
            break
    return model, hist
