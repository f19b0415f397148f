"""Streaming Gaussian mixture estimation by Bayesian moment matching."""

from .bmm import (
    BranchPosterior,
    GmmParams,
    GmmPosterior,
    bmm_step,
    default_prior,
    exact_step,
    fit,
    fit_stream,
    gmm_loglik,
    make_prior,
    mixture_moments,
    point_estimate,
    project,
)
from .distributions import (
    DirichletParams,
    NormalGammaParams,
    NormalWishartParams,
)
from .online_em import OemConfig, oem_fit

__all__ = [
    "BranchPosterior",
    "DirichletParams",
    "GmmParams",
    "GmmPosterior",
    "NormalGammaParams",
    "NormalWishartParams",
    "OemConfig",
    "bmm_step",
    "default_prior",
    "exact_step",
    "fit",
    "fit_stream",
    "gmm_loglik",
    "make_prior",
    "mixture_moments",
    "oem_fit",
    "point_estimate",
    "project",
]

__version__ = "0.1.0"
