import itertools

import numpy as np
import pytest

from bmmgmm import bmm
from bmmgmm import distributed as dd
from bmmgmm.bmm import GmmPosterior, make_prior
from bmmgmm.distributed import PartialPosterior
from bmmgmm.distributions import DirichletParams, NormalWishartParams
from bmmgmm.errors import InvalidCombination
from oracles import batch_ng, batch_nw, component_rel_err


def test_partition_sizes():
    assert [len(s) for s in dd.partition(np.arange(10), 5)] == [2] * 5
    assert [len(s) for s in dd.partition(np.arange(7), 3)] == [3, 2, 2]
    (whole,) = dd.partition(np.arange(7), 1)
    np.testing.assert_array_equal(whole, np.arange(7))


def test_partition_contiguous_and_shuffle():
    parts = dd.partition(np.arange(20), 4)
    np.testing.assert_array_equal(np.concatenate(parts), np.arange(20))
    shuf = dd.partition(np.arange(20), 4, shuffle_seed=1)
    assert sorted(np.concatenate(shuf).tolist()) == list(range(20))
    assert not np.array_equal(np.concatenate(shuf), np.arange(20))


def _with_weights(prior, a):
    return GmmPosterior(DirichletParams(a), prior.components)


def test_combine_dirichlet_example():
    prior = make_prior([[0.0, 0.0], [1.0, 1.0]])
    parts = [PartialPosterior(t, 0, _with_weights(prior, a), prior) for t, a in enumerate([[3, 2], [4, 6]])]
    np.testing.assert_allclose(dd.combine(parts, prior).weights.a, [6, 7], rtol=1e-15)


def test_combine_single_partial_is_identity():
    prior = make_prior([[0.0, 0.0], [2.0, 2.0]])
    post = bmm.fit_stream(prior, np.random.default_rng(0).normal(size=(50, 2)))
    out = dd.combine([PartialPosterior(0, 50, post, prior)], prior)
    assert out is post


@pytest.mark.parametrize("d,T", [(1, 2), (3, 5), (2, 7)])
def test_single_component_combination_is_exact(d, T):
    rng = np.random.default_rng(d * 10 + T)
    prior = make_prior(rng.normal(size=(1, d)), scale=2.0)
    data = rng.normal(1.0, 1.5, (700, d))
    post, partials = dd.fit_distributed(data, prior, T, max_workers=1)
    seq = bmm.fit_stream(prior, data)
    c0 = prior.components[0]
    ref = batch_ng(c0, data) if d == 1 else batch_nw(c0, data)
    assert component_rel_err(post.components[0], ref) < 1e-10
    assert component_rel_err(post.components[0], seq.components[0]) < 1e-10
    assert post.weights.a[0] == pytest.approx(seq.weights.a[0], rel=1e-12)
    assert sum(p.n_processed for p in partials) == 700


def test_nu_accumulates():
    rng = np.random.default_rng(1)
    prior = make_prior([[0.0, 0.0]])
    post, partials = dd.fit_distributed(rng.normal(size=(100, 2)), prior, 4, max_workers=1)
    nu0 = prior.components[0].nu
    assert post.components[0].nu - nu0 == pytest.approx(sum(p.posterior.components[0].nu - nu0 for p in partials))


def test_combine_order_invariant():
    rng = np.random.default_rng(2)
    data = np.vstack([rng.normal(-3, 1, (300, 3)), rng.normal(3, 1, (300, 3))])[rng.permutation(600)]
    prior = bmm.default_prior(data, 2)
    partials = dd.align_components(dd.run_shards(dd.partition(data, 5), prior, max_workers=1))
    ref = dd.combine(partials, prior)
    for perm in list(itertools.permutations(range(5)))[:: 17]:
        out = dd.combine([partials[i] for i in perm], prior)
        np.testing.assert_allclose(out.weights.a, ref.weights.a, rtol=1e-12)
        for c, r in zip(out.components, ref.components):
            assert component_rel_err(c, r) < 1e-12


def test_process_pool_matches_inline():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(400, 2))
    prior = bmm.default_prior(data, 2)
    shards = dd.partition(data, 2)
    a = dd.run_shards(shards, prior, max_workers=1)
    b = dd.run_shards(shards, prior, max_workers=2)
    for p, q in zip(a, b):
        for c, r in zip(p.posterior.components, q.posterior.components):
            np.testing.assert_array_equal(c.W, r.W)


def test_alignment_identity_for_identical_partials():
    prior = make_prior([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    parts = [PartialPosterior(t, 0, prior, prior) for t in range(3)]
    assert [p.permutation for p in dd.align_components(parts)] == [(0, 1, 2)] * 3


@pytest.mark.parametrize("M", [2, 3])
def test_alignment_recovers_constructed_swaps(M):
    rng = np.random.default_rng(M)
    prior = make_prior(rng.normal(0, 5, (M, 2)), scale=25.0)
    post = bmm.fit_stream(prior, rng.normal(0, 5, (40, 2)))
    for perm in itertools.permutations(range(M)):
        swapped = post.permuted(list(perm))
        parts = [PartialPosterior(0, 40, post, prior), PartialPosterior(1, 40, swapped, prior)]
        aligned = dd.align_components(parts)
        recovered = aligned[1].permutation
        locs_ref = [c.mu0 for c in post.components]
        locs = [c.mu0 for c in swapped.components]
        assert list(recovered) == dd.brute_force_alignment(locs_ref, locs)
        for c, r in zip(aligned[1].posterior.components, post.components):
            np.testing.assert_array_equal(c.mu0, r.mu0)


def test_greedy_matches_brute_force_on_random_costs():
    rng = np.random.default_rng(4)
    for _ in range(200):
        ref = rng.normal(0, 10, (3, 2))
        perm = rng.permutation(3)
        locs = ref[np.argsort(perm)] + rng.normal(0, 0.5, (3, 2))
        cost = np.sum((ref[:, None] - locs[None]) ** 2, axis=-1)
        assert dd.greedy_assignment(cost) == dd.brute_force_alignment(ref, locs)


def test_invalid_combination_raises():
    prior = GmmPosterior(DirichletParams([5.0]), (NormalWishartParams([0.0, 0.0], 5.0, np.eye(2), 10.0),))
    weak = GmmPosterior(DirichletParams([1.0]), (NormalWishartParams([0.0, 0.0], 1.0, np.eye(2), 4.0),))
    with pytest.raises(InvalidCombination):
        dd.combine([PartialPosterior(0, 0, weak, prior), PartialPosterior(1, 0, weak, prior)], prior)


def test_incongruent_partials_rejected():
    with pytest.raises(ValueError):
        PartialPosterior(0, 0, make_prior([[0.0, 0.0]]), make_prior([[0.0, 0.0], [1.0, 1.0]]))
