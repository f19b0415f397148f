"""Online Bayesian Moment Matching for Gaussian mixtures.

The posterior after each observation is a mixture of ``M`` products of a
Dirichlet and ``M`` Normal-Wishart (Normal-Gamma when ``d = 1``) factors,
one branch per component that could have produced the point.  Each step
collapses that mixture back to a single product with the same matched
moments, so the state stays ``O(M d^2)`` regardless of stream length.

Two code paths implement a step:

* :func:`exact_step`, :func:`mixture_moments` and :func:`project` build the
  branch mixture explicitly.  They are the readable reference.
* :func:`bmm_step` / :func:`fit_stream` use a vectorised form that exploits
  the fact that component ``i`` only appears in two distinct states across
  the branches (untouched, or updated with the point).  It computes the same
  projection without materialising ``M`` full posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special

from . import distributions as dist
from .distributions import (
    ComponentMoments,
    ComponentMomentsUV,
    DirichletParams,
    NormalGammaParams,
    NormalWishartParams,
    WeightMoments,
)
from .errors import DofTooSmall, IllConditionedPosterior, NumericalError
from .seeding import head_size, seed_locations

Component = Union[NormalWishartParams, NormalGammaParams]

NORMAL_GAMMA = "normal-gamma"
NORMAL_WISHART = "normal-wishart"


@dataclass(frozen=True)
class GmmPosterior:
    """Product posterior ``Dir(w | a) prod_i NW(mu_i, Lambda_i | ...)``."""

    weights: DirichletParams
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ValueError("a mixture needs at least one component")
        if len(comps) != self.weights.size:
            raise ValueError(
                f"{self.weights.size} weights for {len(comps)} components")
        kinds = {type(c) for c in comps}
        if len(kinds) != 1 or not kinds <= {NormalGammaParams, NormalWishartParams}:
            raise TypeError("components must all be NormalGammaParams or all NormalWishartParams")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("components disagree on dimension")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def n_components(self):
        return len(self.components)

    @property
    def family(self):
        if isinstance(self.components[0], NormalGammaParams):
            return NORMAL_GAMMA
        return NORMAL_WISHART

    def permuted(self, perm):
        perm = list(perm)
        return GmmPosterior(
            DirichletParams(self.weights.a[perm]),
            tuple(self.components[i] for i in perm),
        )


@dataclass(frozen=True)
class GmmParams:
    """Point estimate: mixture weights, means ``(M, d)`` and covariances ``(M, d, d)``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covs, dtype=float)
        M, d = mu.shape
        cov = cov.reshape(M, d, d)
        if w.shape != (M,):
            raise ValueError("weights and means disagree on the number of components")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must form a probability vector, got {w}")
        dist.safe_cholesky(cov)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", dist.symmetrize(cov))

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass(frozen=True)
class BranchPosterior:
    """One term of the exact one-step posterior mixture."""

    log_weight: float
    posterior: GmmPosterior


# ---------------------------------------------------------------------------
# priors and point estimates
# ---------------------------------------------------------------------------

def make_prior(means, scale=1.0, kappa=1.0, nu=None, concentration=1.0):
    """Prior with one component centred on each row of ``means``.

    ``scale`` is the expected per-coordinate variance: ``W = I / (nu scale)``
    so that ``E[Lambda] = I / scale``.  ``nu`` defaults to ``d + 2``, the
    smallest integer for which the covariance estimate is finite.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    M, d = means.shape
    nu = float(d + 2) if nu is None else float(nu)
    a = DirichletParams(np.full(M, float(concentration)))
    W = np.eye(d) / (nu * scale)
    comps = []
    for mu in means:
        nw = NormalWishartParams(mu0=mu, kappa=kappa, W=W, nu=nu)
        comps.append(nw.to_normal_gamma() if d == 1 else nw)
    return GmmPosterior(a, tuple(comps))


def default_prior(data_head, n_components, seed=0, scale=None):
    """Data-driven prior seeded from the first rows of the stream.

    Identical component priors never break symmetry (every branch weight stays
    equal), so the locations must differ.  They come from a small k-means on
    the first ``max(10 M, 100)`` rows; ``scale`` defaults to the residual
    per-coordinate variance of that clustering.
    """
    head = np.asarray(data_head, dtype=float)
    if head.ndim == 1:
        head = head[:, None]
    head = head[: head_size(n_components)]
    means, s2 = seed_locations(head, n_components, seed)
    return make_prior(means, scale=s2 if scale is None else scale)


def point_estimate(p: GmmPosterior) -> GmmParams:
    """Posterior mean of ``(w, mu, Sigma)``.

    ``Sigma`` is reported as ``E[Sigma] = W^{-1} / (nu - d - 1)``, the mean of
    the implied inverse-Wishart, not ``E[Lambda]^{-1}``.

    Raises
    ------
    DofTooSmall
        If some ``nu <= d + 1`` (``beta <= 1`` for Normal-Gamma).
    """
    d = p.dim
    w = p.weights.a / p.weights.a.sum()
    means, covs = [], []
    for c in p.components:
        if isinstance(c, NormalGammaParams):
            if not c.beta > 1:
                raise DofTooSmall(f"beta = {c.beta} must exceed 1")
            means.append([c.alpha])
            covs.append([[c.gamma / (c.beta - 1.0)]])
        else:
            if not c.nu > d + 1:
                raise DofTooSmall(f"nu = {c.nu} must exceed d + 1 = {d + 1}")
            means.append(c.mu0)
            covs.append(c.W_inv / (c.nu - d - 1.0))
    return GmmParams(w, np.array(means), np.array(covs))


def component_logpdf(params: GmmParams, data):
    """``log w_i + log N(x_n; mu_i, Sigma_i)`` for every row and component, shape ``(n, M)``."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    chol = dist.safe_cholesky(params.covs)
    logdet = dist.chol_logdet(chol)
    d = params.dim
    out = np.empty((data.shape[0], params.n_components))
    for i in range(params.n_components):
        z = np.linalg.solve(chol[i], (data - params.means[i]).T)
        out[:, i] = -0.5 * (np.sum(z * z, axis=0) + logdet[i] + d * dist.LOG_2PI)
    with np.errstate(divide="ignore"):
        out += np.log(params.weights)
    return out


def gmm_loglik(params: GmmParams, data) -> float:
    """Mean per-row log-likelihood of ``data`` under the mixture."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] == 0:
        raise ValueError("cannot score an empty dataset")
    return float(np.mean(special.logsumexp(component_logpdf(params, data), axis=1)))


def sample_prior(p: GmmPosterior, rng_seed=None) -> GmmParams:
    """Draw one parameter set ``(w, mu_i, Sigma_i = Lambda_i^{-1})`` from the prior."""
    rng = np.random.default_rng(rng_seed)
    w = dist.sample_dirichlet(p.weights, None, rng)
    means, covs = [], []
    for c in p.components:
        if isinstance(c, NormalGammaParams):
            mu, lam = dist.sample_normal_gamma(c, 1, rng)
            means.append(mu)
            covs.append([[1.0 / lam[0]]])
        else:
            mu, lam = dist.sample_normal_wishart(c, 1, rng)
            means.append(mu[0])
            covs.append(np.linalg.inv(lam[0]))
    return GmmParams(w / w.sum(), np.array(means), np.array(covs))


# ---------------------------------------------------------------------------
# reference path: explicit branch mixture
# ---------------------------------------------------------------------------

def exact_step(prior: GmmPosterior, x) -> list:
    """Exact posterior after one observation as ``M`` weighted branches.

    Branch ``j`` attributes ``x`` to component ``j``: that component gets the
    conjugate update and ``a_j`` grows by one.  Its weight is proportional to
    ``E[w_j] * p(x | component j prior)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != prior.dim or not np.all(np.isfinite(x)):
        raise ValueError(f"observation must be a finite {prior.dim}-vector")
    a = prior.weights.a
    log_prior_w = np.log(a) - np.log(a.sum())
    updated, log_w = [], np.empty(prior.n_components)
    for j, comp in enumerate(prior.components):
        if isinstance(comp, NormalGammaParams):
            post, log_c = dist.ng_update(comp, x[0])
        else:
            post, log_c = dist.nw_update(comp, x)
        updated.append(post)
        log_w[j] = log_prior_w[j] + log_c
    log_w -= special.logsumexp(log_w)
    branches = []
    for j in range(prior.n_components):
        a_j = a.copy()
        a_j[j] += 1.0
        comps = list(prior.components)
        comps[j] = updated[j]
        branches.append(BranchPosterior(float(log_w[j]), GmmPosterior(DirichletParams(a_j), tuple(comps))))
    return branches


def posterior_moments(p: GmmPosterior):
    """Matched moments of a single product posterior."""
    comps = p.components
    if p.family == NORMAL_GAMMA:
        cm = [dist.ng_moments(c) for c in comps]
    else:
        cm = [dist.nw_moments(c) for c in comps]
    return dist.dirichlet_moments(p.weights), cm


def mixture_moments(branches: Sequence[BranchPosterior]):
    """Moments of a weighted mixture of product posteriors.

    Raw moments mix linearly.  Central quantities (``cov_mu``,
    ``var_lambda``) are mixed through the law of total variance.  Univariate
    moments carry ``E[mu lam]`` so the projection can use the centred
    ``E[(mu - E[mu])^2 lam]``.
    """
    w = np.exp(np.array([b.log_weight for b in branches]))
    w = w / w.sum()
    per = [posterior_moments(b.posterior) for b in branches]
    m1 = sum(wb * wm.m1 for wb, (wm, _) in zip(w, per))
    m2 = sum(wb * wm.m2 for wb, (wm, _) in zip(w, per))
    conc = float(sum(wb * wm.concentration for wb, (wm, _) in zip(w, per)))
    M = len(per[0][1])
    comps = []
    for i in range(M):
        cs = [cm[i] for _, cm in per]
        if isinstance(cs[0], ComponentMomentsUV):
            comps.append(ComponentMomentsUV(
                e_mu=float(sum(wb * c.e_mu for wb, c in zip(w, cs))),
                e_lambda=float(sum(wb * c.e_lambda for wb, c in zip(w, cs))),
                e_lambda2=float(sum(wb * c.e_lambda2 for wb, c in zip(w, cs))),
                e_mu2lambda=float(sum(wb * c.e_mu2lambda for wb, c in zip(w, cs))),
                e_mulambda=float(sum(wb * c.e_mulambda for wb, c in zip(w, cs))),
            ))
            continue
        e_mu = sum(wb * c.e_mu for wb, c in zip(w, cs))
        e_lam = sum(wb * c.e_lambda for wb, c in zip(w, cs))
        cov_mu = sum(wb * (c.cov_mu + np.outer(c.e_mu - e_mu, c.e_mu - e_mu)) for wb, c in zip(w, cs))
        var_lam = sum(wb * (c.var_lambda + (c.e_lambda - e_lam) ** 2) for wb, c in zip(w, cs))
        comps.append(ComponentMoments(e_mu, dist.symmetrize(cov_mu), dist.symmetrize(e_lam), var_lam))
    return WeightMoments(m1, m2, conc), comps


def project(moments) -> GmmPosterior:
    """Map matched moments back to a single Dirichlet x NW/NG product."""
    wm, cms = moments
    weights = dist.dirichlet_from_moments(wm)
    if isinstance(cms[0], ComponentMomentsUV):
        comps = tuple(dist.ng_from_moments(c) for c in cms)
    else:
        comps = tuple(dist.nw_from_moments(c) for c in cms)
    return GmmPosterior(weights, comps)


def reference_step(prior: GmmPosterior, x) -> GmmPosterior:
    """``project(mixture_moments(exact_step(prior, x)))``."""
    return project(mixture_moments(exact_step(prior, x)))


# ---------------------------------------------------------------------------
# vectorised path
# ---------------------------------------------------------------------------

def _project_weights(a, r):
    """Dirichlet projection of the branch mixture, in closed form.

    Branch ``k`` has concentrations ``a + e_k`` and weight ``r_k``.  The
    variance is assembled from within- and between-branch parts to avoid the
    cancellation in ``E[w^2] - E[w]^2``.
    """
    if a.size == 1:
        return a + 1.0
    s1 = a.sum() + 1.0
    m1 = (a + r) / s1
    within = ((1.0 - r) * a * (s1 - a) + r * (a + 1.0) * (s1 - a - 1.0)) / (s1 * s1 * (s1 + 1.0))
    var = within + r * (1.0 - r) / (s1 * s1)
    est = m1 * (m1 * (1.0 - m1) - var) / var
    if np.any(~np.isfinite(est)) or np.any(est <= 0):
        raise NumericalError("weight projection produced non-positive concentrations")
    return m1 / m1.sum() * est.sum()


class _NWState:
    """Stacked Normal-Wishart parameters for all components."""

    __slots__ = ("a", "mu0", "kappa", "W", "W_inv", "logdet_W", "nu")

    @classmethod
    def pack(cls, p: GmmPosterior):
        s = cls()
        s.a = p.weights.a.copy()
        s.mu0 = np.array([c.mu0 for c in p.components])
        s.kappa = np.array([c.kappa for c in p.components])
        s.nu = np.array([c.nu for c in p.components])
        s.W = np.array([c.W for c in p.components])
        chol = dist.safe_cholesky(s.W)
        s.logdet_W = dist.chol_logdet(chol)
        s.W_inv = dist.pd_inverse(s.W)
        return s

    def unpack(self) -> GmmPosterior:
        comps = tuple(
            NormalWishartParams(self.mu0[i], self.kappa[i], self.W[i], self.nu[i])
            for i in range(self.a.size)
        )
        return GmmPosterior(DirichletParams(self.a.copy()), comps)

    def point_estimate(self) -> GmmParams:
        d = self.mu0.shape[1]
        if np.any(self.nu <= d + 1):
            raise DofTooSmall("nu must exceed d + 1 for every component")
        covs = self.W_inv / (self.nu - d - 1.0)[:, None, None]
        return GmmParams(self.a / self.a.sum(), self.mu0.copy(), covs)

    def step(self, x):
        M, d = self.mu0.shape
        kappa, nu, W, W_inv = self.kappa, self.nu, self.W, self.W_inv
        diff = x - self.mu0
        Wd = np.einsum("mij,mj->mi", W, diff)
        q = np.einsum("mi,mi->m", diff, Wd)
        c = kappa / (kappa + 1.0)

        # Student-t predictive, dof = nu - d + 1, scale = W^{-1} / (c dof)
        dof = nu - d + 1.0
        log_t = (
            special.gammaln(0.5 * (dof + d)) - special.gammaln(0.5 * dof)
            + 0.5 * d * (np.log(c) - np.log(np.pi)) + 0.5 * self.logdet_W
            - 0.5 * (dof + d) * np.log1p(c * q)
        )
        log_r = np.log(self.a) + log_t
        r = np.exp(log_r - special.logsumexp(log_r))
        s = 1.0 - r

        # conjugate update of every component (W via Sherman-Morrison)
        step_mu = diff / (kappa + 1.0)[:, None]
        W1 = W - (c / (1.0 + c * q))[:, None, None] * np.einsum("mi,mj->mij", Wd, Wd)
        W1_inv = W_inv + c[:, None, None] * np.einsum("mi,mj->mij", diff, diff)
        nu1, kappa1 = nu + 1.0, kappa + 1.0

        # moments of the two-state mixture per component
        rr, ss = r[:, None, None], s[:, None, None]
        e_mu = self.mu0 + r[:, None] * step_mu
        cov_mu = (
            ss * W_inv / (kappa * (nu - d - 1.0))[:, None, None]
            + rr * W1_inv / (kappa1 * (nu1 - d - 1.0))[:, None, None]
            + (r * s)[:, None, None] * np.einsum("mi,mj->mij", step_mu, step_mu)
        )
        E0 = nu[:, None, None] * W
        E1 = nu1[:, None, None] * W1
        e_lam = dist.symmetrize(ss * E0 + rr * E1)
        dW0 = np.diagonal(W, axis1=1, axis2=2)
        dW1 = np.diagonal(W1, axis1=1, axis2=2)
        var_diag = (
            s[:, None] * 2.0 * nu[:, None] * dW0**2
            + r[:, None] * 2.0 * nu1[:, None] * dW1**2
            + (r * s)[:, None] * (nu1[:, None] * dW1 - nu[:, None] * dW0) ** 2
        )
        e_diag = np.diagonal(e_lam, axis1=1, axis2=2)
        nu_new = np.mean(2.0 * e_diag**2 / var_diag, axis=1)
        if np.any(~(nu_new > d + 1)):
            raise NumericalError(f"projected nu {nu_new} does not exceed d + 1")

        chol = dist.safe_cholesky(e_lam)
        eye = np.broadcast_to(np.eye(d), chol.shape)
        linv = np.linalg.solve(chol, eye)
        e_lam_inv = np.swapaxes(linv, 1, 2) @ linv
        W_new = e_lam / nu_new[:, None, None]
        tr = np.einsum("mij,mji->m", cov_mu, W_new)
        kappa_new = d / ((nu_new - d - 1.0) * tr)
        if np.any(~(kappa_new > 0)):
            raise NumericalError("projected kappa is not positive")

        self.a = _project_weights(self.a, r)
        self.mu0 = e_mu
        self.kappa = kappa_new
        self.nu = nu_new
        self.W = W_new
        self.W_inv = dist.symmetrize(e_lam_inv * nu_new[:, None, None])
        self.logdet_W = dist.chol_logdet(chol) - d * np.log(nu_new)


class _NGState:
    """Stacked Normal-Gamma parameters for all components."""

    __slots__ = ("a", "alpha", "kappa", "beta", "gamma")

    @classmethod
    def pack(cls, p: GmmPosterior):
        s = cls()
        s.a = p.weights.a.copy()
        s.alpha = np.array([c.alpha for c in p.components])
        s.kappa = np.array([c.kappa for c in p.components])
        s.beta = np.array([c.beta for c in p.components])
        s.gamma = np.array([c.gamma for c in p.components])
        return s

    def unpack(self) -> GmmPosterior:
        comps = tuple(
            NormalGammaParams(self.alpha[i], self.kappa[i], self.beta[i], self.gamma[i])
            for i in range(self.a.size)
        )
        return GmmPosterior(DirichletParams(self.a.copy()), comps)

    def point_estimate(self) -> GmmParams:
        if np.any(self.beta <= 1):
            raise DofTooSmall("beta must exceed 1 for every component")
        var = self.gamma / (self.beta - 1.0)
        return GmmParams(self.a / self.a.sum(), self.alpha[:, None], var[:, None, None])

    def step(self, x):
        x = x[0]
        al, k, b, g = self.alpha, self.kappa, self.beta, self.gamma
        k1, b1 = k + 1.0, b + 0.5
        g1 = g + k * (x - al) ** 2 / (2.0 * k1)
        log_c = (
            0.5 * np.log(k / k1) + special.gammaln(b1) - special.gammaln(b)
            + b * np.log(g) - b1 * np.log(g1) - 0.5 * dist.LOG_2PI
        )
        log_r = np.log(self.a) + log_c
        r = np.exp(log_r - special.logsumexp(log_r))
        s = 1.0 - r
        al1 = (k * al + x) / k1
        delta = al1 - al
        L0, L1 = b / g, b1 / g1
        e_mu = al + r * delta
        e_lam = s * L0 + r * L1
        var_lam = s * b / g**2 + r * b1 / g1**2 + r * s * (L1 - L0) ** 2
        # E[(mu - E[mu])^2 lam]
        inv_kappa = (
            s * ((r * delta) ** 2 * L0 + 1.0 / k)
            + r * ((s * delta) ** 2 * L1 + 1.0 / k1)
        )
        if np.any(~(inv_kappa > 0)) or np.any(~(var_lam > 0)):
            raise NumericalError("Normal-Gamma projection hit a non-positive variance")
        self.a = _project_weights(self.a, r)
        self.alpha = e_mu
        self.kappa = 1.0 / inv_kappa
        self.beta = e_lam**2 / var_lam
        self.gamma = e_lam / var_lam


def _pack(p: GmmPosterior):
    return _NGState.pack(p) if p.family == NORMAL_GAMMA else _NWState.pack(p)


def bmm_step(prior: GmmPosterior, x) -> GmmPosterior:
    """One moment-matching step: condition on ``x`` and project back."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != prior.dim or not np.all(np.isfinite(x)):
        raise ValueError(f"observation must be a finite {prior.dim}-vector")
    state = _pack(prior)
    state.step(x)
    return state.unpack()


def default_cadence(n):
    return max(1, n // 500)


def fit_stream(
    prior: GmmPosterior,
    data,
    callback: Optional[Callable[[int, GmmParams], None]] = None,
    every: Optional[int] = None,
) -> GmmPosterior:
    """Fold :func:`bmm_step` over ``data`` in order.

    ``callback(n_seen, point_estimate)`` is called every ``every``
    observations (default ``max(1, N // 500)``) and after the last one.

    Raises
    ------
    IllConditionedPosterior
        If a step cannot be projected back to a valid posterior.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        return prior
    data = data.reshape(-1, prior.dim)
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    n = data.shape[0]
    every = default_cadence(n) if every is None else int(every)
    state = _pack(prior)
    for i in range(n):
        try:
            state.step(data[i])
        except NumericalError as exc:
            raise IllConditionedPosterior(
                f"posterior became ill-conditioned at observation {i}: {exc}", index=i) from exc
        if callback is not None and ((i + 1) % every == 0 or i + 1 == n):
            callback(i + 1, state.point_estimate())
    return state.unpack()


def fit(data, n_components, seed=0, scale=None, callback=None, every=None):
    """Convenience wrapper: :func:`default_prior` then :func:`fit_stream`."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    prior = default_prior(data, n_components, seed=seed, scale=scale)
    return fit_stream(prior, data, callback=callback, every=every)
