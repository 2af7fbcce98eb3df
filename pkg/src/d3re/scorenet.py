"""Time-score networks ``s(x, t)`` built on :mod:`d3re.autodiff`.

The network input is ``[x, t, sin(2 pi k t), cos(2 pi k t)]`` for
``k = 1..K``.  The time-only head returns one value per row; the joint head
returns ``d + 1`` values ordered ``[time score, data score...]``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigurationError, DomainError

CHECKPOINT_MAGIC = b"D3RECKPT"


@dataclass(frozen=True)
class ScoreNetConfig:
    input_dim: int
    hidden: tuple = (128, 128)
    head: str = "time"
    n_freq: int = 8
    use_time: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigurationError("input_dim and hidden widths must be >= 1")
        if self.n_freq < 0:
            raise ConfigurationError("n_freq must be >= 0")
        if self.head not in ("time", "joint"):
            raise ConfigurationError(f"head must be 'time' or 'joint', got {self.head!r}")
        if self.head == "joint" and not self.use_time:
            raise ConfigurationError("joint head needs the time input")

    @property
    def embed_dim(self):
        return 1 + 2 * self.n_freq if self.use_time else 0

    @property
    def n_in(self):
        return self.input_dim + self.embed_dim

    @property
    def n_out(self):
        return self.input_dim + 1 if self.head == "joint" else 1

    def layer_sizes(self):
        return [self.n_in, *self.hidden, self.n_out]


@dataclass
class ScoreModel:
    config: ScoreNetConfig
    params: dict = field(repr=False)
    seed: int | None = None

    @classmethod
    def init(cls, config, rng, seed=None, zero_output=False):
        return cls(config, ad.init_mlp(config.layer_sizes(), rng, zero_output), seed)

    def copy(self):
        return ScoreModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)


def time_features(t, n_freq):
    """Fourier time embedding and its derivative in ``t``; both ``(n, 1 + 2K)``."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    k = 2.0 * np.pi * np.arange(1, n_freq + 1)
    s, c = np.sin(k * t), np.cos(k * t)
    feat = np.concatenate([t, s, c], axis=1)
    dfeat = np.concatenate([np.ones_like(t), k * c, -k * s], axis=1)
    return feat, dfeat


def _inputs(m, x, t):
    cfg = m.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != cfg.input_dim:
        raise ConfigurationError(f"expected {cfg.input_dim}-dimensional points, got {x.shape[-1]}")
    if not cfg.use_time:
        return x, np.zeros_like(x)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    if np.any(t < 0) or np.any(t > 1):
        raise DomainError("t must lie in [0, 1]")
    feat, dfeat = time_features(t, cfg.n_freq)
    u = np.concatenate([x, feat], axis=1)
    du = np.concatenate([np.zeros_like(x), dfeat], axis=1)
    return u, du


def _squeeze(m, out):
    return out[:, 0] if m.config.head == "time" else out


def score_forward(m, x, t=None):
    """Network output: shape ``(n,)`` for the time head, ``(n, d + 1)`` for the joint head."""
    u, _ = _inputs(m, x, t)
    return _squeeze(m, ad.mlp_forward(m.params, u))


def score_dt(m, x, t):
    """Exact ``d/dt`` of :func:`score_forward` via forward mode."""
    u, du = _inputs(m, x, t)
    out = ad.mlp_jvp(m.params, ad.Dual(u, du))
    return _squeeze(m, out.tangent)


def score_and_dt(m, x, t):
    u, du = _inputs(m, x, t)
    out = ad.mlp_jvp(m.params, ad.Dual(u, du))
    return _squeeze(m, out.primal), _squeeze(m, out.tangent)


def score_hutchinson(m, x, t, v):
    """Joint head only: ``(s[t], s[x], v^T (grad_x s[x]) v)``."""
    if m.config.head != "joint":
        raise ConfigurationError("Hutchinson quadratic form needs the joint head")
    u, _ = _inputs(m, x, t)
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    du = np.zeros_like(u)
    du[:, :m.config.input_dim] = v
    out = ad.mlp_jvp(m.params, ad.Dual(u, du))
    quad = np.sum(v * out.tangent[:, 1:], axis=1)
    return out.primal[:, 0], out.primal[:, 1:], quad


def time_score(m, x, t):
    """Scalar time score for either head."""
    out = score_forward(m, x, t)
    return out if m.config.head == "time" else out[:, 0]


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, m, iteration=0, extra=None):
    """Write ``MAGIC | u32 header length | JSON header | little-endian f64 parameters``.

    Parameters are stored layer-major, each weight matrix (``fan_in x fan_out``,
    row-major) followed by its bias.
    """
    blob = ad.flatten(m.params).astype("<f8").tobytes()
    header = {
        "config": {**asdict(m.config), "hidden": list(m.config.hidden)},
        "seed": m.seed,
        "iteration": int(iteration),
        "param_order": list(m.params),
        "n_params": int(sum(p.size for p in m.params.values())),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    if extra:
        header.update(extra)
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        fh.write(blob)


def load_checkpoint(path):
    """Return ``(ScoreModel, header)``."""
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"{path} is not a checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        blob = fh.read()
    if hashlib.sha256(blob).hexdigest() != header["sha256"]:
        raise ConfigurationError("checkpoint parameter blob is corrupt")
    cfg = ScoreNetConfig(**header["config"])
    template = ad.init_mlp(cfg.layer_sizes(), np.random.default_rng(0))
    params = ad.unflatten(template, np.frombuffer(blob, dtype="<f8"))
    return ScoreModel(cfg, params, header.get("seed")), header
