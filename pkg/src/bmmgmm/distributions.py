"""Conjugate-family kernels for the Dirichlet x Normal-Wishart mixture prior.

Wishart convention
------------------
Throughout this package ``Lambda ~ Wishart(W, nu)`` uses the *scale-matrix*
parameterisation, i.e. ``E[Lambda] = nu * W``.  The inverse-scale convention
(``E[Lambda] = nu * W^{-1}``) silently breaks every moment formula below, so
anything that hands a ``W`` to this module must use the scale form.  This is
also the convention of :class:`scipy.stats.wishart`.

The univariate Normal-Gamma prior ``NG(alpha, kappa, beta, gamma)`` is the
``d = 1`` case with ``nu = 2 beta`` and ``W = 1 / (2 gamma)``.

All parameter containers are frozen dataclasses and every function here is
pure.  Arrays held by a container should be treated as read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .errors import (
    DofTooSmall,
    InconsistentMoments,
    NonPositiveVariance,
    SingularScale,
)

LOG_2PI = float(np.log(2.0 * np.pi))

# relative jitter accepted before a matrix is declared singular
PD_JITTER = 1e-10


# ---------------------------------------------------------------------------
# linear algebra helpers
# ---------------------------------------------------------------------------

def symmetrize(a):
    """Return ``(a + a^T) / 2`` over the last two axes."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def safe_cholesky(a):
    """Lower Cholesky factor of a symmetric matrix (or stack of matrices).

    Retries once with a diagonal jitter of ``PD_JITTER * trace / d``; if that
    still fails the matrix is rejected.

    Raises
    ------
    SingularScale
        If the (jittered) matrix is not positive-definite or not finite.
    """
    a = symmetrize(a)
    if not np.all(np.isfinite(a)):
        raise SingularScale("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    d = a.shape[-1]
    tr = np.trace(a, axis1=-2, axis2=-1)
    jitter = PD_JITTER * np.abs(tr) / d
    eye = np.eye(d)
    try:
        return np.linalg.cholesky(a + jitter[..., None, None] * eye)
    except np.linalg.LinAlgError:
        raise SingularScale("matrix is not positive-definite") from None


def chol_logdet(chol):
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)


def pd_inverse(a):
    """Inverse of a symmetric PD matrix (stack) through its Cholesky factor."""
    chol = safe_cholesky(a)
    d = chol.shape[-1]
    eye = np.broadcast_to(np.eye(d), chol.shape)
    linv = np.linalg.solve(chol, eye)
    return symmetrize(np.swapaxes(linv, -1, -2) @ linv)


def is_pd(a):
    try:
        safe_cholesky(a)
    except SingularScale:
        return False
    return True


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector ``a`` of a Dirichlet over the mixture weights."""

    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.ndim != 1 or a.size < 1:
            raise ValueError("Dirichlet concentration must be a non-empty vector")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValueError(f"Dirichlet concentrations must be positive, got {a}")
        object.__setattr__(self, "a", a)

    @property
    def size(self):
        return self.a.size


@dataclass(frozen=True)
class NormalGammaParams:
    """``mu | lam ~ N(alpha, 1/(kappa lam))``, ``lam ~ Gamma(beta, rate=gamma)``."""

    alpha: float
    kappa: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "kappa", "beta", "gamma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        for name in ("kappa", "beta", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")

    dim = 1

    def to_normal_wishart(self):
        return NormalWishartParams(
            mu0=np.array([self.alpha]),
            kappa=self.kappa,
            W=np.array([[0.5 / self.gamma]]),
            nu=2.0 * self.beta,
        )


@dataclass(frozen=True)
class NormalWishartParams:
    """``mu | Lambda ~ N(mu0, (kappa Lambda)^{-1})``, ``Lambda ~ Wishart(W, nu)``.

    ``W`` is the scale matrix, so ``E[Lambda] = nu W``.
    """

    mu0: np.ndarray
    kappa: float
    W: np.ndarray
    nu: float

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        W = symmetrize(np.atleast_2d(np.asarray(self.W, dtype=float)))
        d = mu0.size
        if mu0.ndim != 1 or W.shape != (d, d):
            raise ValueError(f"shape mismatch: mu0 {mu0.shape}, W {W.shape}")
        if not np.all(np.isfinite(mu0)):
            raise ValueError("mu0 must be finite")
        kappa, nu = float(self.kappa), float(self.nu)
        if not (np.isfinite(kappa) and kappa > 0):
            raise ValueError(f"kappa must be positive, got {kappa}")
        if not (np.isfinite(nu) and nu > d - 1):
            raise ValueError(f"nu must exceed d - 1 = {d - 1}, got {nu}")
        safe_cholesky(W)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "nu", nu)

    @property
    def dim(self):
        return self.mu0.size

    @property
    def W_inv(self):
        return pd_inverse(self.W)

    def to_normal_gamma(self):
        if self.dim != 1:
            raise ValueError("only a 1-d Normal-Wishart reduces to a Normal-Gamma")
        return NormalGammaParams(
            alpha=self.mu0[0],
            kappa=self.kappa,
            beta=0.5 * self.nu,
            gamma=0.5 / self.W[0, 0],
        )


@dataclass(frozen=True)
class WeightMoments:
    """First and second raw moments ``E[w_i]``, ``E[w_i^2]`` of the weights.

    ``concentration`` is the expected total ``sum(a)``.  It is only read for a
    single component, where ``w = 1`` surely and the moments say nothing
    about ``a``.
    """

    m1: np.ndarray
    m2: np.ndarray
    concentration: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "m1", np.atleast_1d(np.asarray(self.m1, dtype=float)))
        object.__setattr__(self, "m2", np.atleast_1d(np.asarray(self.m2, dtype=float)))
        if self.m1.shape != self.m2.shape:
            raise ValueError("m1 and m2 must have the same shape")


@dataclass(frozen=True)
class ComponentMoments:
    """Matched moments of one Normal-Wishart factor.

    ``cov_mu`` is the covariance of ``mu`` about its mean and ``var_lambda``
    holds the element-wise variances ``Var(Lambda_ij)``.
    """

    e_mu: np.ndarray
    cov_mu: np.ndarray
    e_lambda: np.ndarray
    var_lambda: np.ndarray


@dataclass(frozen=True)
class ComponentMomentsUV:
    """Moments ``E[mu]``, ``E[lam]``, ``E[lam^2]``, ``E[mu^2 lam]`` of a Normal-Gamma.

    ``e_mulambda`` (``E[mu lam]``) is optional.  When present,
    :func:`ng_from_moments` matches ``E[(mu - E[mu])^2 lam]`` instead of the
    raw ``E[mu^2 lam]``; the two coincide on a Normal-Gamma but only the
    centred form is translation invariant on mixtures.
    """

    e_mu: float
    e_lambda: float
    e_lambda2: float
    e_mu2lambda: float
    e_mulambda: Optional[float] = None

    @property
    def central_mu2lambda(self):
        """``E[(mu - E[mu])^2 lam]`` (needs ``e_mulambda``)."""
        m = self.e_mu
        return self.e_mu2lambda - 2.0 * m * self.e_mulambda + m * m * self.e_lambda


# ---------------------------------------------------------------------------
# Dirichlet
# ---------------------------------------------------------------------------

def dirichlet_moments(p: DirichletParams) -> WeightMoments:
    a = p.a
    s = a.sum()
    return WeightMoments(m1=a / s, m2=a * (a + 1.0) / (s * (1.0 + s)), concentration=float(s))


def dirichlet_from_moments(m: WeightMoments, renormalize: bool = True) -> DirichletParams:
    """Recover Dirichlet concentrations from ``(E[w_j], E[w_j^2])`` pairs.

    Each component gives its own estimate
    ``a_j = E[w_j] (E[w_j] - E[w_j^2]) / (E[w_j^2] - E[w_j]^2)``, which is
    ``E[w_j]`` times the total concentration implied by that pair.  On moments
    of an actual Dirichlet every implied total agrees.  On mixture moments
    they do not, and then ``a_j / sum(a)`` drifts away from ``E[w_j]``.  With
    ``renormalize=True`` (default) the estimates are rescaled as
    ``a_j = E[w_j] * sum_k a_k`` so the first moments are kept exactly while
    the total concentration equals the sum of the per-component estimates.

    Raises
    ------
    NonPositiveVariance
        If some ``E[w_j^2] <= E[w_j]^2``.
    InconsistentMoments
        If a recovered concentration is not positive.
    """
    m1, m2 = m.m1, m.m2
    if m1.size == 1:
        if m.concentration is None or not m.concentration > 0:
            raise NonPositiveVariance("a single weight has zero variance; concentration is required")
        return DirichletParams([m.concentration])
    var = m2 - m1 * m1
    if np.any(~np.isfinite(var)) or np.any(var <= 0):
        raise NonPositiveVariance(f"weight moments imply variance {var}")
    a = m1 * (m1 - m2) / var
    if np.any(a <= 0):
        raise InconsistentMoments(f"recovered concentrations {a} are not positive")
    if renormalize:
        a = (m1 / m1.sum()) * a.sum()
    return DirichletParams(a)


def sample_dirichlet(p: DirichletParams, size, rng):
    rng = np.random.default_rng(rng)
    return rng.dirichlet(p.a, size=size)


# ---------------------------------------------------------------------------
# Normal-Gamma
# ---------------------------------------------------------------------------

def ng_update(p: NormalGammaParams, x: float):
    """Condition a Normal-Gamma prior on one Gaussian observation.

    Returns the posterior and ``log_c``, the log marginal likelihood of ``x``
    (including the ``1/sqrt(2 pi)`` Gaussian factor, so ``exp(log_c)`` is the
    actual predictive density at ``x``).
    """
    x = float(x)
    k1 = p.kappa + 1.0
    b1 = p.beta + 0.5
    g1 = p.gamma + p.kappa * (x - p.alpha) ** 2 / (2.0 * k1)
    post = NormalGammaParams(alpha=(p.kappa * p.alpha + x) / k1, kappa=k1, beta=b1, gamma=g1)
    log_c = (
        0.5 * np.log(p.kappa / k1)
        + special.gammaln(b1)
        - special.gammaln(p.beta)
        + p.beta * np.log(p.gamma)
        - b1 * np.log(g1)
        - 0.5 * LOG_2PI
    )
    return post, float(log_c)


def ng_moments(p: NormalGammaParams) -> ComponentMomentsUV:
    e_lam = p.beta / p.gamma
    return ComponentMomentsUV(
        e_mu=p.alpha,
        e_lambda=e_lam,
        e_lambda2=p.beta * (p.beta + 1.0) / p.gamma**2,
        e_mu2lambda=p.alpha**2 * e_lam + 1.0 / p.kappa,
        e_mulambda=p.alpha * e_lam,
    )


def ng_from_moments(m: ComponentMomentsUV) -> NormalGammaParams:
    """Invert :func:`ng_moments`.

    ``kappa`` comes from ``E[mu^2 lam] - E[mu]^2 E[lam] = 1 / kappa``, or from
    ``E[(mu - E[mu])^2 lam] = 1 / kappa`` when ``E[mu lam]`` is supplied.
    """
    var_lam = m.e_lambda2 - m.e_lambda**2
    if not var_lam > 0:
        raise NonPositiveVariance(f"Var(lambda) = {var_lam}")
    if m.e_mulambda is None:
        inv_kappa = m.e_mu2lambda - m.e_mu**2 * m.e_lambda
    else:
        inv_kappa = m.central_mu2lambda
    if not inv_kappa > 0:
        raise NonPositiveVariance(f"moments imply 1/kappa = {inv_kappa}")
    if not m.e_lambda > 0:
        raise NonPositiveVariance(f"E[lambda] = {m.e_lambda}")
    return NormalGammaParams(
        alpha=m.e_mu,
        kappa=1.0 / inv_kappa,
        beta=m.e_lambda**2 / var_lam,
        gamma=m.e_lambda / var_lam,
    )


def sample_normal_gamma(p: NormalGammaParams, size, rng):
    """Draw ``(mu, lam)`` pairs; returns two arrays of shape ``(size,)``."""
    rng = np.random.default_rng(rng)
    lam = rng.gamma(shape=p.beta, scale=1.0 / p.gamma, size=size)
    mu = p.alpha + rng.standard_normal(size) / np.sqrt(p.kappa * lam)
    return mu, lam


# ---------------------------------------------------------------------------
# Normal-Wishart
# ---------------------------------------------------------------------------

def student_t_logpdf(x, dof, loc, scale):
    """Log density of a multivariate Student-t with scale matrix ``scale``.

    Accepts a single point of shape ``(d,)`` or a batch ``(n, d)``.
    """
    x = np.asarray(x, dtype=float)
    loc = np.atleast_1d(np.asarray(loc, dtype=float))
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    dof = float(dof)
    if not dof > 0:
        raise ValueError(f"dof must be positive, got {dof}")
    d = loc.size
    chol = safe_cholesky(scale)
    diff = np.atleast_2d(x - loc)
    z = np.linalg.solve(chol, diff.T)
    maha = np.sum(z * z, axis=0)
    out = (
        special.gammaln(0.5 * (dof + d))
        - special.gammaln(0.5 * dof)
        - 0.5 * d * np.log(dof * np.pi)
        - 0.5 * chol_logdet(chol)
        - 0.5 * (dof + d) * np.log1p(maha / dof)
    )
    return float(out[0]) if x.ndim == 1 else out


def nw_predictive(p: NormalWishartParams):
    """``(dof, loc, scale)`` of the Student-t posterior predictive."""
    d = p.dim
    dof = p.nu - d + 1.0
    scale = (p.kappa + 1.0) / (p.kappa * dof) * p.W_inv
    return dof, p.mu0, scale


def nw_update(p: NormalWishartParams, x):
    """Condition a Normal-Wishart prior on one observation.

    Returns the posterior and the log predictive density of ``x``.

    Raises
    ------
    SingularScale
        If the updated scale is not positive-definite.
    """
    x = np.asarray(x, dtype=float).reshape(p.dim)
    dof, loc, scale = nw_predictive(p)
    log_c = student_t_logpdf(x, dof, loc, scale)
    diff = x - p.mu0
    k1 = p.kappa + 1.0
    w_inv = p.W_inv + (p.kappa / k1) * np.outer(diff, diff)
    post = NormalWishartParams(
        mu0=(p.kappa * p.mu0 + x) / k1,
        kappa=k1,
        W=pd_inverse(w_inv),
        nu=p.nu + 1.0,
    )
    return post, log_c


def nw_moments(p: NormalWishartParams) -> ComponentMoments:
    """Exact moments of a Normal-Wishart.

    ``cov_mu = W^{-1} / (kappa (nu - d - 1))`` is the covariance of the
    marginal of ``mu``, which needs ``nu > d + 1``.

    Raises
    ------
    DofTooSmall
        If ``nu <= d + 1``.
    """
    d = p.dim
    if not p.nu > d + 1:
        raise DofTooSmall(f"nu = {p.nu} must exceed d + 1 = {d + 1}")
    W = p.W
    diag = np.diag(W)
    return ComponentMoments(
        e_mu=p.mu0.copy(),
        cov_mu=p.W_inv / (p.kappa * (p.nu - d - 1.0)),
        e_lambda=p.nu * W,
        var_lambda=p.nu * (W * W + np.outer(diag, diag)),
    )


def nw_from_moments(m: ComponentMoments) -> NormalWishartParams:
    """Invert :func:`nw_moments`.

    ``nu`` is the mean of the per-diagonal estimates
    ``2 E[Lambda_ii]^2 / Var(Lambda_ii)``, ``W = E[Lambda] / nu`` and ``kappa``
    solves ``trace(cov_mu W) = d / (kappa (nu - d - 1))``.  Exact on moments of
    a Normal-Wishart; on anything else it matches ``E[mu]``, ``E[Lambda]`` and
    those two scalar summaries.

    Raises
    ------
    InconsistentMoments
        If the recovered parameters are invalid.
    """
    e_mu = np.atleast_1d(np.asarray(m.e_mu, dtype=float))
    e_lam = symmetrize(np.atleast_2d(m.e_lambda))
    d = e_mu.size
    diag_e = np.diag(e_lam)
    diag_v = np.diag(np.atleast_2d(m.var_lambda))
    if np.any(diag_v <= 0) or np.any(diag_e <= 0):
        raise InconsistentMoments("diagonal of E[Lambda] and Var(Lambda) must be positive")
    nu = float(np.mean(2.0 * diag_e**2 / diag_v))
    if not nu > d + 1:
        raise InconsistentMoments(f"recovered nu = {nu} does not exceed d + 1 = {d + 1}")
    W = e_lam / nu
    if not is_pd(W):
        raise InconsistentMoments("recovered W is not positive-definite")
    tr = float(np.trace(np.atleast_2d(m.cov_mu) @ W))
    if not tr > 0:
        raise InconsistentMoments(f"trace(cov_mu W) = {tr}")
    kappa = d / ((nu - d - 1.0) * tr)
    return NormalWishartParams(mu0=e_mu, kappa=kappa, W=W, nu=nu)


def sample_normal_wishart(p: NormalWishartParams, size, rng):
    """Draw ``(mu, Lambda)``; shapes ``(size, d)`` and ``(size, d, d)``."""
    rng = np.random.default_rng(rng)
    d = p.dim
    lam = stats.wishart(df=p.nu, scale=p.W).rvs(size=size, random_state=rng)
    lam = np.asarray(lam).reshape(size, d, d)
    chol = np.linalg.cholesky(p.kappa * lam)
    z = rng.standard_normal((size, d, 1))
    # mu - mu0 = L^{-T} z has covariance (L L^T)^{-1}
    mu = p.mu0 + np.linalg.solve(np.swapaxes(chol, -1, -2), z)[..., 0]
    return mu, lam
