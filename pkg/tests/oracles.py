"""Independent reference computations used by the tests."""

import numpy as np

from bmmgmm.distributions import NormalGammaParams, NormalWishartParams


def batch_nw(prior: NormalWishartParams, data):
    """Closed-form Normal-Wishart posterior after all of ``data`` at once."""
    x = np.atleast_2d(data)
    n = x.shape[0]
    xbar = x.mean(0)
    S = (x - xbar).T @ (x - xbar)
    k = prior.kappa
    diff = xbar - prior.mu0
    w_inv = np.linalg.inv(prior.W) + S + (k * n / (k + n)) * np.outer(diff, diff)
    return NormalWishartParams((k * prior.mu0 + n * xbar) / (k + n), k + n, np.linalg.inv(w_inv), prior.nu + n)


def batch_ng(prior: NormalGammaParams, data):
    x = np.asarray(data, dtype=float).ravel()
    n = x.size
    xbar = x.mean()
    k = prior.kappa
    return NormalGammaParams(
        alpha=(k * prior.alpha + n * xbar) / (k + n),
        kappa=k + n,
        beta=prior.beta + n / 2.0,
        gamma=prior.gamma + 0.5 * np.sum((x - xbar) ** 2) + k * n * (xbar - prior.alpha) ** 2 / (2.0 * (k + n)),
    )


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def component_rel_err(c, ref):
    """Largest relative difference over every parameter of two components."""
    if isinstance(ref, NormalGammaParams):
        names = ("alpha", "kappa", "beta", "gamma")
    else:
        names = ("mu0", "kappa", "W", "nu")
    errs = []
    for nm in names:
        a, b = np.asarray(getattr(c, nm), dtype=float), np.asarray(getattr(ref, nm), dtype=float)
        # entries near zero are compared against the parameter's overall magnitude
        scale = np.maximum(np.abs(b), np.max(np.abs(b)) * 1e-3)
        errs.append(float(np.max(np.abs(a - b) / scale)))
    return max(errs)
