"""JSON run configuration shared by the CLI subcommands."""

from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .distributions import TOY_NAMES, GaussianSpec
from .estimation import Integrator
from .interpolants import InterpolantConfig, Schedule
from .training import TrainConfig, Weighting


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GaussianCfg(_Strict):
    mean: Union[float, list[float]] = 0.0
    cov: Union[float, list[float], list[list[float]], list[list[list[float]]]] = 1.0
    kind: Literal["scalar", "diagonal", "block", "full"] = "scalar"
    dim: Optional[int] = None

    def build(self, dim=None):
        d = self.dim or dim
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim == 0:
            mean = np.full(d or 1, float(mean))
        return GaussianSpec(mean, np.asarray(self.cov, dtype=float), self.kind)


class DataCfg(_Strict):
    """Endpoint pair.

    ``gaussian``: ``q0``/``q1`` are analytic Gaussians (default ``N(0, 1)``, ``N(1, 1)``).
    ``toy``: ``q1`` is a named 2-D dataset and ``q0`` a Gaussian reference.
    ``mi``: ``q0 = N(0, I_dim)`` and ``q1`` the block-correlated Gaussian.
    """

    kind: Literal["gaussian", "toy", "mi"] = "gaussian"
    q0: GaussianCfg = Field(default_factory=GaussianCfg)
    q1: Optional[GaussianCfg] = Field(default_factory=lambda: GaussianCfg(mean=1.0))
    name: Optional[str] = None
    dim: int = 1
    rho: float = 0.8

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "toy":
            if self.name not in TOY_NAMES:
                raise ValueError(f"toy data needs name in {TOY_NAMES}")
            self.dim = 2
        if self.kind == "gaussian" and self.q1 is None:
            raise ValueError("gaussian data needs q1")
        if self.kind == "mi" and (self.dim % 2 or not -1 < self.rho < 1):
            raise ValueError("mi data needs even dim and |rho| < 1")
        return self

    def endpoints(self):
        """``(q0 spec, q1 spec or None, dim)``."""
        if self.kind == "mi":
            return (GaussianSpec(np.zeros(self.dim), 1.0),
                    GaussianSpec.correlated_blocks(self.dim, self.rho), self.dim)
        q0 = self.q0.build(self.dim)
        if self.kind == "toy":
            return q0, None, 2
        q1 = self.q1.build(q0.dim)
        return q0, q1, q0.dim


class ScheduleCfg(_Strict):
    kind: Literal["linear", "vp", "tre"] = "linear"
    beta_min: float = 0.1
    beta_max: float = 20.0
    eta: list[float] = Field(default_factory=list)


class InterpolantCfg(_Strict):
    kind: Literal["DI", "DBI", "DDBI", "DSBI"] = "DDBI"
    schedule: ScheduleCfg = Field(default_factory=ScheduleCfg)
    gamma2: float = Field(0.5, ge=0)
    eps: float = Field(1e-5, ge=0)

    def build(self):
        s = self.schedule
        return InterpolantConfig(self.kind, Schedule(s.kind, s.beta_min, s.beta_max, tuple(s.eta)),
                                 self.gamma2, self.eps)


class WeightingCfg(_Strict):
    kind: Literal["bridge", "constant"] = "bridge"
    scale: Optional[float] = None


class TrainCfg(_Strict):
    loss: Literal["L1", "L3", "L4", "Logistic"] = "L3"
    batch_size: int = Field(512, ge=2)
    iterations: int = Field(5000, ge=0)
    lr: float = Field(1e-3, gt=0)
    weighting: WeightingCfg = Field(default_factory=WeightingCfg)
    boundary_weight: float = 1.0
    hidden: list[int] = Field(default_factory=lambda: [128, 128])
    n_freq: int = Field(8, ge=0)
    stratified: bool = True


class IntegratorCfg(_Strict):
    kind: Literal["gauss-legendre", "rk4", "rk45"] = "gauss-legendre"
    nodes: int = Field(64, ge=1)
    steps: int = Field(128, ge=1)
    rtol: float = 1e-5
    atol: float = 1e-7

    def build(self):
        return Integrator(self.kind, self.nodes, self.steps, self.rtol, self.atol)


class GridCfg(_Strict):
    bounds: list[list[float]] = Field(default_factory=lambda: [[-4.0, 4.0], [-4.0, 4.0]])
    resolution: int = Field(100, ge=2)


class RunConfig(_Strict):
    data: DataCfg = Field(default_factory=DataCfg)
    interpolant: InterpolantCfg = Field(default_factory=InterpolantCfg)
    train: TrainCfg = Field(default_factory=TrainCfg)
    integrator: IntegratorCfg = Field(default_factory=IntegratorCfg)
    grid: GridCfg = Field(default_factory=GridCfg)
    seed: int = Field(0, ge=0)
    n_samples: int = Field(1000, ge=1)
    score: Literal["model", "oracle"] = "model"
    n_trajectories: int = Field(16, ge=1)
    n_times: int = Field(51, ge=2)

    def train_config(self, interp=None):
        t = self.train
        ic = interp or self.interpolant.build()
        scale = t.weighting.scale if t.weighting.scale is not None else self.interpolant.gamma2
        return TrainConfig(loss=t.loss, interpolant=ic, batch_size=t.batch_size,
                           iterations=t.iterations, lr=t.lr,
                           weighting=Weighting(t.weighting.kind, scale),
                           boundary_weight=t.boundary_weight, seed=self.seed,
                           hidden=tuple(t.hidden), n_freq=t.n_freq, stratified=t.stratified)

    def canonical(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(path=None, seed=None):
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = json.load(fh)
    if seed is not None:
        raw["seed"] = seed
    return RunConfig.model_validate(raw)
