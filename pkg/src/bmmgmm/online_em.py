"""Online EM baseline (stochastic-approximation E-step, exact M-step).

After observation ``n`` the averaged sufficient statistics move towards the
current point's expected statistics with step size ``rho_n = (n + 3)^-alpha``;
the parameters are then recomputed in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import distributions as dist
from .bmm import GmmParams, component_logpdf, default_cadence
from .seeding import head_size, seed_locations

DEFAULT_ALPHA = 0.75
# covariance floor, relative to the data scale
COV_FLOOR = 1e-6


def step_size(n, alpha=DEFAULT_ALPHA):
    """``rho_n = (n + 3)^-alpha`` for the ``n``-th observation (1-based)."""
    return (np.asarray(n, dtype=float) + 3.0) ** (-alpha)


@dataclass(frozen=True)
class OemConfig:
    n_components: int
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        if not 0.5 <= self.alpha <= 1.0:
            raise ValueError(f"step exponent must lie in [0.5, 1], got {self.alpha}")
        if self.n_components < 1:
            raise ValueError("n_components must be positive")


@dataclass(frozen=True)
class OemState:
    """Averaged sufficient statistics plus the parameters they imply."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    params: GmmParams
    n: int
    alpha: float
    eps: float


def _m_step(s0, s1, s2, eps):
    d = s1.shape[1]
    w = s0 / s0.sum()
    s0c = np.maximum(s0, 1e-300)
    mu = s1 / s0c[:, None]
    cov = s2 / s0c[:, None, None] - np.einsum("mi,mj->mij", mu, mu)
    cov = dist.symmetrize(cov) + eps * np.eye(d)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        cov = (vecs * np.maximum(vals, eps)[:, None, :]) @ np.swapaxes(vecs, 1, 2)
        cov = dist.symmetrize(cov)
    return GmmParams(w, mu, cov)


def responsibilities(params: GmmParams, x):
    """Posterior component probabilities of a single point."""
    lp = component_logpdf(params, np.atleast_2d(x))[0]
    return np.exp(lp - special.logsumexp(lp))


def oem_init(n_components, dim, data_head, seed=0, alpha=DEFAULT_ALPHA) -> OemState:
    """Seed means from the first ``max(10 M, 100)`` rows; uniform weights.

    Covariances start at ``s^2 I`` where ``s^2`` is the residual variance of
    the seeding clustering.  The statistics are set consistently with these
    parameters, as if they had been averaged over a unit of data.
    """
    head = np.asarray(data_head, dtype=float).reshape(-1, dim)[: head_size(n_components)]
    means, s2 = seed_locations(head, n_components, seed)
    M = n_components
    w = np.full(M, 1.0 / M)
    covs = np.broadcast_to(s2 * np.eye(dim), (M, dim, dim)).copy()
    s0 = w.copy()
    s1 = w[:, None] * means
    sec = w[:, None, None] * (covs + np.einsum("mi,mj->mij", means, means))
    return OemState(s0, s1, sec, GmmParams(w, means, covs), 0, float(alpha), COV_FLOOR * s2)


def oem_step(state: OemState, x) -> OemState:
    x = np.asarray(x, dtype=float).reshape(state.params.dim)
    n = state.n + 1
    rho = float(step_size(n, state.alpha))
    r = responsibilities(state.params, x)
    s0 = (1.0 - rho) * state.s0 + rho * r
    s1 = (1.0 - rho) * state.s1 + rho * r[:, None] * x
    s2 = (1.0 - rho) * state.s2 + rho * r[:, None, None] * np.outer(x, x)
    return replace(state, s0=s0, s1=s1, s2=s2, params=_m_step(s0, s1, s2, state.eps), n=n)


def oem_fit(
    data,
    config: OemConfig,
    callback: Optional[Callable[[int, GmmParams], None]] = None,
    every: Optional[int] = None,
) -> GmmParams:
    """Single pass of online EM over ``data``; same callback contract as BMM."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n = data.shape[0]
    if n == 0:
        raise ValueError("online EM needs at least one observation")
    state = oem_init(config.n_components, data.shape[1], data, config.seed, config.alpha)
    every = default_cadence(n) if every is None else int(every)
    for i in range(n):
        state = oem_step(state, data[i])
        if callback is not None and ((i + 1) % every == 0 or i + 1 == n):
            callback(i + 1, state.params)
    return state.params
