"""Density-ratio estimation by time-score matching along stochastic bridges."""

from .distributions import GaussianSpec, gaussian_kl, gaussian_logpdf, gaussian_sample, toy2d_sample
from .estimation import (Integrator, density_grid, estimate_logratio, estimate_mi,
                         integrate_logratio, log_density)
from .estimator import D3RE
from .exceptions import (ConfigurationError, ConvergenceWarning, DomainError, IntegrationError,
                         NonFiniteError, UndefinedScoreError)
from .interpolants import (InterpolantConfig, Schedule, conditional_time_score,
                           gaussian_marginal, gaussian_marginal_time_score, sample_path, sigma2)
from .scorenet import ScoreModel, ScoreNetConfig, load_checkpoint, save_checkpoint
from .training import TrainConfig, Weighting, train
from .transport import Coupling, cost_matrix, entropic_objective, sinkhorn

__version__ = "0.1.0"

__all__ = [
    "D3RE", "GaussianSpec", "Integrator", "InterpolantConfig", "Schedule", "ScoreModel",
    "ScoreNetConfig", "TrainConfig", "Weighting", "Coupling",
    "ConfigurationError", "ConvergenceWarning", "DomainError", "IntegrationError",
    "NonFiniteError", "UndefinedScoreError",
    "conditional_time_score", "cost_matrix", "density_grid", "entropic_objective",
    "estimate_logratio", "estimate_mi", "gaussian_kl", "gaussian_logpdf", "gaussian_marginal",
    "gaussian_marginal_time_score", "gaussian_sample", "integrate_logratio", "load_checkpoint",
    "log_density", "sample_path", "save_checkpoint", "sigma2", "sinkhorn", "toy2d_sample", "train",
]
