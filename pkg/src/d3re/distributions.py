"""Gaussian endpoints, 2-D toy samplers and Gaussian dequantization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianSpec:
    """Multivariate normal with structured covariance.

    ``kind`` is one of ``"scalar"`` (``cov`` is a float, covariance ``cov * I``),
    ``"diagonal"`` (``cov`` has shape ``(d,)``), ``"block"`` (``cov`` has shape
    ``(d // 2, 2, 2)``) or ``"full"`` (``cov`` has shape ``(d, d)``).
    """

    mean: np.ndarray
    cov: np.ndarray
    kind: str = "scalar"
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.cov, dtype=np.float64)
        d = mean.shape[0]
        if mean.ndim != 1 or d < 1:
            raise ConfigurationError("mean must be a non-empty vector")
        if self.kind == "scalar":
            if cov.size != 1 or not cov.item() > 0:
                raise ConfigurationError("scalar covariance must be positive")
            cov = cov.reshape(())
            chol = np.sqrt(cov)
        elif self.kind == "diagonal":
            if cov.shape != (d,) or not np.all(cov > 0):
                raise ConfigurationError("diagonal covariance must be a positive length-d vector")
            chol = np.sqrt(cov)
        elif self.kind == "block":
            if d % 2 or cov.shape != (d // 2, 2, 2):
                raise ConfigurationError("block covariance needs even d and shape (d/2, 2, 2)")
            chol = _cholesky(cov)
        elif self.kind == "full":
            if cov.shape != (d, d):
                raise ConfigurationError("full covariance must be d x d")
            chol = _cholesky(cov)
        else:
            raise ConfigurationError(f"unknown covariance kind {self.kind!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self):
        return self.mean.shape[0]

    def dense_cov(self):
        d = self.dim
        if self.kind == "scalar":
            return float(self.cov) * np.eye(d)
        if self.kind == "diagonal":
            return np.diag(self.cov)
        if self.kind == "block":
            out = np.zeros((d, d))
            for k, blk in enumerate(self.cov):
                out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = blk
            return out
        return self.cov.copy()

    def logdet(self):
        if self.kind == "scalar":
            return self.dim * np.log(float(self.cov))
        if self.kind == "diagonal":
            return float(np.sum(np.log(self.cov)))
        return float(2.0 * np.sum(np.log(np.diagonal(self._chol, axis1=-2, axis2=-1))))

    def whiten(self, x):
        """Solve ``L u = x - mean`` for each row; ``||u||^2`` is the Mahalanobis term."""
        r = np.atleast_2d(x) - self.mean
        if self.kind in ("scalar", "diagonal"):
            return r / self._chol
        if self.kind == "block":
            rb = r.reshape(r.shape[0], -1, 2)
            L = self._chol
            u0 = rb[..., 0] / L[:, 0, 0]
            u1 = (rb[..., 1] - L[:, 1, 0] * u0) / L[:, 1, 1]
            return np.stack([u0, u1], axis=-1).reshape(r.shape)
        from scipy.linalg import solve_triangular
        return solve_triangular(self._chol, r.T, lower=True).T

    def color(self, z):
        """Map standard normal rows ``z`` to draws from this distribution."""
        z = np.atleast_2d(z)
        if self.kind in ("scalar", "diagonal"):
            return self.mean + z * self._chol
        if self.kind == "block":
            zb = z.reshape(z.shape[0], -1, 2)
            out = np.einsum("kij,nkj->nki", self._chol, zb)
            return self.mean + out.reshape(z.shape)
        return self.mean + z @ self._chol.T

    @classmethod
    def isotropic(cls, mean, var=1.0, dim=None):
        mean = np.full(dim, float(mean)) if dim is not None else mean
        return cls(mean, var, "scalar")

    @classmethod
    def correlated_blocks(cls, dim, rho=0.8):
        """Zero-mean Gaussian with ``[[1, rho], [rho, 1]]`` blocks on the diagonal."""
        if dim % 2:
            raise ConfigurationError("block-correlated Gaussian needs even dimension")
        blk = np.array([[1.0, rho], [rho, 1.0]])
        return cls(np.zeros(dim), np.tile(blk, (dim // 2, 1, 1)), "block")


def _cholesky(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("covariance is not positive definite") from exc


def gaussian_sample(spec, n, rng):
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    return spec.color(rng.standard_normal((n, spec.dim)))


def gaussian_logpdf(spec, x):
    """Log density at ``x`` (a vector, or rows of a matrix)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if x.shape[-1] != spec.dim:
        raise ConfigurationError(f"point dimension {x.shape[-1]} != {spec.dim}")
    u = spec.whiten(x)
    out = -0.5 * (spec.dim * LOG_2PI + spec.logdet() + np.sum(u * u, axis=-1))
    return float(out[0]) if single else out


def gaussian_kl(p, q):
    """KL(p || q) in nats."""
    if p.dim != q.dim:
        raise ConfigurationError("dimension mismatch")
    Sp, Sq = p.dense_cov(), q.dense_cov()
    dm = q.mean - p.mean
    Sq_inv = np.linalg.inv(Sq)
    return float(0.5 * (np.trace(Sq_inv @ Sp) + dm @ Sq_inv @ dm - p.dim
                        + q.logdet() - p.logdet()))


def dequantize(batch, eps, rng):
    """Add i.i.d. ``N(0, eps I)`` noise to every row."""
    if eps < 0:
        raise ConfigurationError("dequantization variance must be non-negative")
    batch = np.asarray(batch, dtype=np.float64)
    if eps == 0:
        return batch.copy()
    return batch + np.sqrt(eps) * rng.standard_normal(batch.shape)


# ---------------------------------------------------------------------------
# 2-D toy datasets

TOY_NAMES = ("swissroll", "circles", "rings", "moons", "8gaussians",
             "pinwheel", "2spirals", "checkerboard")

EIGHT_GAUSSIAN_MEANS = 2.0 * np.stack(
    [np.cos(np.arange(8) * np.pi / 4), np.sin(np.arange(8) * np.pi / 4)], axis=1)
EIGHT_GAUSSIAN_STD = 0.2


def _swissroll(n, rng):
    theta = rng.uniform(1.5 * np.pi, 4.5 * np.pi, n)
    x = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1) / 3.0
    x = x + 0.05 * rng.standard_normal((n, 2))
    return x / 1.5


def _circles(n, rng):
    radius = np.where(rng.random(n) < 0.5, 1.0, 0.5)
    ang = rng.uniform(0, 2 * np.pi, n)
    x = radius[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return 2.0 * (x + 0.08 * rng.standard_normal((n, 2)))


def _rings(n, rng):
    radius = rng.choice([0.25, 0.5, 0.75, 1.0], size=n)
    ang = rng.uniform(0, 2 * np.pi, n)
    x = radius[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return 2.5 * (x + 0.025 * rng.standard_normal((n, 2)))


def _moons(n, rng):
    upper = rng.random(n) < 0.5
    ang = rng.uniform(0, np.pi, n)
    x = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    lower = np.stack([1.0 - np.cos(ang), 0.5 - np.sin(ang)], axis=1)
    x = np.where(upper[:, None], x, lower) - np.array([0.5, 0.25])
    return 2.0 * (x + 0.08 * rng.standard_normal((n, 2)))


def _eight_gaussians(n, rng):
    idx = rng.integers(0, 8, n)
    return EIGHT_GAUSSIAN_MEANS[idx] + EIGHT_GAUSSIAN_STD * rng.standard_normal((n, 2))


def _pinwheel(n, rng, n_blades=5, radial_std=0.3, tangential_std=0.05, rate=0.3):
    blade = rng.integers(0, n_blades, n)
    feats = rng.standard_normal((n, 2)) * np.array([radial_std, tangential_std])
    feats[:, 0] += 1.0
    ang = 2 * np.pi * blade / n_blades + rate * np.exp(feats[:, 0])
    c, s = np.cos(ang), np.sin(ang)
    x = np.stack([c * feats[:, 0] - s * feats[:, 1], s * feats[:, 0] + c * feats[:, 1]], axis=1)
    return 2.0 * x


def _two_spirals(n, rng):
    theta = rng.uniform(0, 3 * np.pi, n)
    r = theta / np.pi * 2.0
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    x = sign[:, None] * np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return (x + 0.1 * rng.standard_normal((n, 2))) / 1.5


def _checkerboard(n, rng):
    # 4 x 4 board of 2 x 2 cells on [-4, 4]^2, 8 occupied cells
    x = rng.uniform(-2.0, 2.0, n)
    y = rng.uniform(0.0, 1.0, n) - 2.0 * rng.integers(0, 2, n) + np.floor(x) % 2
    return 2.0 * np.stack([x, y], axis=1)


def checkerboard_black(points):
    """True where a point lies in an occupied checkerboard cell."""
    cells = np.floor(np.atleast_2d(points) / 2.0) % 2
    return cells[:, 0] == cells[:, 1]


# Every generator stays inside [-TOY_BOX, TOY_BOX]^2 up to Gaussian-noise tails
# (far below 1e-6 of the mass); checkerboard is exactly inside [-4, 4]^2.
TOY_BOX = 5.0

_TOYS = {
    "swissroll": _swissroll,
    "circles": _circles,
    "rings": _rings,
    "moons": _moons,
    "8gaussians": _eight_gaussians,
    "pinwheel": _pinwheel,
    "2spirals": _two_spirals,
    "checkerboard": _checkerboard,
}


def toy2d_sample(name, n, rng):
    """Draw ``n`` points from one of the eight named 2-D datasets."""
    try:
        gen = _TOYS[name]
    except KeyError:
        raise ConfigurationError(f"unknown toy dataset {name!r}; choose from {TOY_NAMES}") from None
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    return gen(n, rng)
