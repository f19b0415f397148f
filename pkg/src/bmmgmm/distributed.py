"""Distributed moment matching: independent shard fits merged into one posterior.

Every shard starts from the same prior ``P(theta)`` and produces a partial
posterior ``P_t``.  The merged posterior is ``P(theta) prod_t P_t / P(theta)``.
Both factor families are exponential families, so the product and quotient
reduce to adding and subtracting natural parameters.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from . import distributions as dist
from .bmm import GmmPosterior, NORMAL_GAMMA, fit_stream
from .distributions import DirichletParams, NormalWishartParams
from .errors import InvalidCombination, SingularScale

DEFAULT_SHARDS = 5


@dataclass(frozen=True)
class PartialPosterior:
    """Posterior of one shard.  ``permutation[i]`` is the original index of
    the component now stored at position ``i``."""

    shard_id: int
    n_processed: int
    posterior: GmmPosterior
    prior: GmmPosterior
    permutation: Optional[tuple] = None

    def __post_init__(self):
        p, q = self.posterior, self.prior
        if p.n_components != q.n_components or p.dim != q.dim or p.family != q.family:
            raise ValueError("posterior and prior are not congruent")


def partition(data, n_shards, shuffle_seed=None):
    """Split rows into ``n_shards`` contiguous, order-preserving blocks.

    Sizes differ by at most one, larger blocks first.  With ``shuffle_seed``
    the rows are permuted before splitting.
    """
    data = np.asarray(data)
    if n_shards < 1:
        raise ValueError("need at least one shard")
    if shuffle_seed is not None:
        data = data[np.random.default_rng(shuffle_seed).permutation(len(data))]
    return np.array_split(data, n_shards)


def _fit_shard(args):
    shard_id, shard, prior = args
    post = fit_stream(prior, shard)
    return PartialPosterior(shard_id, len(shard), post, prior)


def run_shards(shards: Sequence, prior: GmmPosterior, max_workers=None):
    """Fit every shard from the shared ``prior``; results are in shard order.

    Uses a process pool of ``min(len(shards), cpu_count)`` workers unless
    ``max_workers`` says otherwise; ``max_workers=1`` runs in-process.
    """
    jobs = [(t, np.asarray(s, dtype=float), prior) for t, s in enumerate(shards)]
    if max_workers is None:
        max_workers = min(len(jobs), os.cpu_count() or 1)
    if max_workers <= 1 or len(jobs) <= 1:
        return [_fit_shard(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_fit_shard, jobs))


def _locations(p: GmmPosterior):
    if p.family == NORMAL_GAMMA:
        return np.array([[c.alpha] for c in p.components])
    return np.array([c.mu0 for c in p.components])


def greedy_assignment(cost):
    """Match rows to columns by repeatedly taking the cheapest free pair.

    Returns ``perm`` with ``perm[row] = column``.
    """
    cost = np.asarray(cost, dtype=float)
    M = cost.shape[0]
    perm = [-1] * M
    free_r, free_c = set(range(M)), set(range(M))
    order = np.argsort(cost, axis=None, kind="stable")
    for flat in order:
        i, j = divmod(int(flat), M)
        if i in free_r and j in free_c:
            perm[i] = j
            free_r.discard(i)
            free_c.discard(j)
            if not free_r:
                break
    return perm


def align_components(partials: Sequence[PartialPosterior]):
    """Relabel each partial so its components line up with partial #1.

    Cost is the squared distance between component locations; matching is
    greedy.  The reference partial keeps the identity permutation.
    """
    if not partials:
        return []
    ref = _locations(partials[0].posterior)
    M = ref.shape[0]
    out = [replace(partials[0], permutation=tuple(range(M)))]
    for part in partials[1:]:
        loc = _locations(part.posterior)
        cost = np.sum((ref[:, None, :] - loc[None, :, :]) ** 2, axis=-1)
        perm = greedy_assignment(cost)
        out.append(replace(part, posterior=part.posterior.permuted(perm), permutation=tuple(perm)))
    return out


def brute_force_alignment(ref_locs, locs):
    """Exhaustive minimum-cost permutation (oracle for small ``M``)."""
    M = len(ref_locs)
    cost = np.sum((np.asarray(ref_locs)[:, None] - np.asarray(locs)[None]) ** 2, axis=-1)
    best = min(permutations(range(M)), key=lambda p: sum(cost[i, p[i]] for i in range(M)))
    return list(best)


# ---------------------------------------------------------------------------
# natural-parameter combination
# ---------------------------------------------------------------------------

def _natural(c: NormalWishartParams):
    """``(kappa mu0, kappa, W^{-1} + kappa mu0 mu0^T, nu)``."""
    k, m = c.kappa, c.mu0
    return (k * m, np.array(k), c.W_inv + k * np.outer(m, m), np.array(c.nu))


def _fsum_stack(terms):
    """Element-wise correctly rounded sum of equally shaped arrays."""
    stack = np.stack([np.asarray(t, dtype=float) for t in terms])
    flat = stack.reshape(stack.shape[0], -1)
    out = np.array([math.fsum(flat[:, i]) for i in range(flat.shape[1])])
    return out.reshape(stack.shape[1:])


def _combine_terms(parts, prior_part, n_factors):
    """``sum(parts) - (n_factors - 1) * prior_part``, element-wise with fsum."""
    return _fsum_stack(list(parts) + [-(n_factors - 1.0) * np.asarray(prior_part, dtype=float)])


def combine(partials: Sequence[PartialPosterior], prior: GmmPosterior) -> GmmPosterior:
    """Merge aligned partial posteriors.

    The sums are correctly rounded (``math.fsum``), so the result does not
    depend on the order of ``partials``.

    Raises
    ------
    InvalidCombination
        If the merged parameters are not a valid posterior.
    """
    T = len(partials)
    if T == 0:
        raise ValueError("nothing to combine")
    for p in partials:
        if p.posterior.n_components != prior.n_components or p.posterior.dim != prior.dim \
                or p.posterior.family != prior.family:
            raise ValueError("partial posterior is not congruent with the prior")
    if T == 1:
        return partials[0].posterior
    a = _combine_terms([p.posterior.weights.a for p in partials], prior.weights.a, T)
    if np.any(~(a > 0)):
        raise InvalidCombination(f"combined Dirichlet concentrations {a} are not positive")
    ng = prior.family == NORMAL_GAMMA
    d = prior.dim
    comps = []
    for i in range(prior.n_components):
        def as_nw(c):
            return c.to_normal_wishart() if ng else c
        nats = [_natural(as_nw(p.posterior.components[i])) for p in partials]
        nat0 = _natural(as_nw(prior.components[i]))
        eta = [_combine_terms([n[k] for n in nats], nat0[k], T) for k in range(4)]
        kappa, nu = float(eta[1]), float(eta[3])
        if not kappa > 0:
            raise InvalidCombination(f"combined kappa = {kappa}")
        if not nu > d - 1:
            raise InvalidCombination(f"combined nu = {nu} does not exceed d - 1")
        mu0 = eta[0] / kappa
        w_inv = eta[2] - kappa * np.outer(mu0, mu0)
        try:
            W = dist.pd_inverse(w_inv)
        except SingularScale:
            raise InvalidCombination("combined W^{-1} is not positive-definite") from None
        nw = NormalWishartParams(mu0, kappa, W, nu)
        comps.append(nw.to_normal_gamma() if ng else nw)
    return GmmPosterior(DirichletParams(a), tuple(comps))


def fit_distributed(data, prior: GmmPosterior, n_shards=DEFAULT_SHARDS, max_workers=None,
                    shuffle_seed=None):
    """Partition, fit shards, align and combine.  Returns ``(posterior, partials)``."""
    shards = partition(data, n_shards, shuffle_seed=shuffle_seed)
    partials = align_components(run_shards(shards, prior, max_workers=max_workers))
    return combine(partials, prior), partials
