import math

import numpy as np
import pytest
from scipy import stats

from bmmgmm import online_em as oem
from bmmgmm.bmm import GmmParams
from bmmgmm.online_em import OemConfig


def test_step_size_example():
    assert oem.step_size(1, 1.0) == 0.25


@pytest.mark.parametrize("alpha", [0.5, 0.75, 1.0])
def test_step_size_formula(alpha):
    n = np.arange(1, 1000)
    np.testing.assert_array_equal(oem.step_size(n, alpha), (n + 3.0) ** (-alpha))


@pytest.mark.parametrize("alpha", [0.6, 0.75, 1.0])
def test_step_size_series_trends(alpha):
    rho = oem.step_size(np.arange(1, 10**6 + 1), alpha)
    assert np.all(np.diff(rho) < 0)
    s = np.cumsum(rho)
    s2 = np.cumsum(rho**2)
    # per-decade increments: non-shrinking for the divergent sum, shrinking
    # geometrically (ratio 10^(1 - 2 alpha)) for the convergent one
    inc = lambda c, lo, hi: c[hi - 1] - c[lo - 1]
    assert inc(s, 10**5, 10**6) >= 0.99 * inc(s, 10**4, 10**5)
    assert inc(s2, 10**5, 10**6) < 0.9 * inc(s2, 10**4, 10**5)


def test_alpha_range_enforced():
    with pytest.raises(ValueError):
        OemConfig(2, alpha=0.4)
    with pytest.raises(ValueError):
        OemConfig(2, alpha=1.2)


def test_init_single_component_uses_head_mean():
    head = np.random.default_rng(0).normal(3.0, 1.0, (100, 2))
    st = oem.oem_init(1, 2, head, seed=0)
    np.testing.assert_allclose(st.params.means[0], head.mean(0), rtol=1e-12)


def test_init_deterministic_and_pd():
    head = np.random.default_rng(1).normal(size=(300, 3))
    a, b = oem.oem_init(4, 3, head, seed=7), oem.oem_init(4, 3, head, seed=7)
    np.testing.assert_array_equal(a.params.means, b.params.means)
    assert all(np.all(np.linalg.eigvalsh(c) > 0) for c in a.params.covs)
    np.testing.assert_allclose(a.params.weights, 0.25)


def test_responsibilities_match_batch_e_step():
    rng = np.random.default_rng(2)
    params = GmmParams([0.2, 0.5, 0.3], rng.normal(size=(3, 2)), [np.eye(2), np.diag([2, 0.5]), 0.3 * np.eye(2)])
    st = oem.oem_init(3, 2, rng.normal(size=(100, 2)))
    st = oem.OemState(st.s0, st.s1, st.s2, params, 0, st.alpha, st.eps)
    x = rng.normal(size=2)
    dens = np.array([w * stats.multivariate_normal(m, c).pdf(x)
                     for w, m, c in zip(params.weights, params.means, params.covs)])
    expected = dens / dens.sum()
    np.testing.assert_allclose(oem.responsibilities(params, x), expected, rtol=1e-12)
    new = oem.oem_step(st, x)
    rho = oem.step_size(1, st.alpha)
    np.testing.assert_allclose(new.s0, (1 - rho) * st.s0 + rho * expected, rtol=1e-12)


def test_single_component_responsibility_is_one():
    st = oem.oem_init(1, 2, np.random.default_rng(3).normal(size=(50, 2)))
    assert oem.responsibilities(st.params, [10.0, -4.0])[0] == 1.0


def test_single_component_tracks_running_mean():
    N = 10**5
    data = np.random.default_rng(4).standard_normal((N, 1))
    mu = oem.oem_fit(data, OemConfig(1)).means[0]
    assert np.all(np.abs(mu - data.mean(0)) <= 10 * 1 / math.sqrt(N))


def test_weights_and_covariances_stay_valid():
    rng = np.random.default_rng(5)
    data = np.vstack([rng.normal(-3, 1, (500, 2)), rng.normal(3, 0.5, (500, 2))])[rng.permutation(1000)]
    st = oem.oem_init(3, 2, data, seed=0)
    for x in data:
        st = oem.oem_step(st, x)
        assert abs(st.params.weights.sum() - 1) < 1e-12
        assert np.all(np.linalg.eigvalsh(st.params.covs) > 0)


def test_fit_deterministic():
    data = np.random.default_rng(6).normal(size=(500, 3))
    a = oem.oem_fit(data, OemConfig(2, seed=3))
    b = oem.oem_fit(data, OemConfig(2, seed=3))
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covs, b.covs)


def test_callback_contract():
    seen = []
    oem.oem_fit(np.zeros((10, 1)) + np.arange(10)[:, None], OemConfig(1), callback=lambda n, p: seen.append(n), every=3)
    assert seen == [3, 6, 9, 10]


def test_repeated_points_floor_keeps_pd():
    data = np.ones((200, 2))
    p = oem.oem_fit(data, OemConfig(1))
    assert np.all(np.linalg.eigvalsh(p.covs[0]) > 0)
