import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from mpdiff import builtins as bi
from mpdiff.diagnostics import (
    KL_ALPHA,
    MomentReport,
    batch_means_se,
    effective_sample_size,
    ergodic_average,
    histogram_kl,
    moment_report,
    target_bin_masses,
)
from mpdiff.errors import InsufficientDataError, InvalidInputError
from mpdiff.samplers import MalaSampler, SamplerConfig, run_chain


def ar1(rng, n, rho):
    z = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = z[0] / math.sqrt(1 - rho * rho)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + z[i]
    return x


def test_constant_observable():
    assert ergodic_average(np.full((400, 2), 3.5)) == (3.5, 0.0)


def test_short_chain_rejected():
    with pytest.raises(InsufficientDataError):
        ergodic_average(np.zeros(99))
    with pytest.raises(InsufficientDataError):
        effective_sample_size(np.zeros(50))


def test_observable_shape_checked():
    with pytest.raises(InvalidInputError):
        ergodic_average(np.zeros((200, 2)), lambda s: s)


def test_batch_means_uses_sqrt_n_batches():
    values = np.arange(100.0)
    means = values.reshape(10, 10).mean(axis=1)
    assert batch_means_se(values) == pytest.approx(means.std(ddof=1) / math.sqrt(10), rel=1e-14)


def test_iid_clt_coverage():
    hits = 0
    for seed in range(200):
        x = np.random.default_rng(seed).standard_normal(2500)
        mean, se = ergodic_average(x)
        hits += abs(mean) <= 4 * se
    assert hits >= 198


def test_iid_second_moment(rng):
    mean, se = ergodic_average(rng.standard_normal((40000, 1)), lambda s: s[:, 0] ** 2)
    assert abs(mean - 1.0) <= 4 * se


def test_batch_se_tracks_autocorrelation(rng):
    # AR(1) variance of the mean is (1 + rho) / (1 - rho) / (1 - rho^2) / n
    rho, n = 0.5, 90000
    x = ar1(rng, n, rho)
    _, se = ergodic_average(x)
    exact = math.sqrt((1 + rho) / (1 - rho) / (1 - rho**2) / n)
    assert se == pytest.approx(exact, rel=0.25)


def test_ess_iid():
    ratios = [effective_sample_size(np.random.default_rng(s).standard_normal(5000)) / 5000 for s in range(20)]
    assert all(0.8 <= r <= 1.2 for r in ratios)


def test_ess_constant_chain_floor():
    assert effective_sample_size(np.full(1000, 2.0)) <= 1.0


@pytest.mark.parametrize("seed", range(5))
def test_ess_ar1(seed):
    n, rho = 20000, 0.5
    ess = effective_sample_size(ar1(np.random.default_rng(seed), n, rho))
    assert ess / n == pytest.approx((1 - rho) / (1 + rho), rel=0.3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(100, 3000))
def test_ess_in_range(seed, n):
    x = np.cumsum(np.random.default_rng(seed).standard_normal(n))
    ess = effective_sample_size(x)
    assert 0 < ess <= n


def test_moment_report_z_and_se():
    r = MomentReport("m", 1.2, 0.1, 1.0, "derived")
    assert r.z == pytest.approx(2.0)
    assert r.passed
    assert r.to_dict()["z"] == pytest.approx(2.0)
    with pytest.raises(InsufficientDataError):
        MomentReport("m", 1.0, 0.0, 1.0, "trivial")


def test_moment_report_from_chain(rng):
    rep = moment_report(rng.standard_normal((10000, 1)), lambda s: s[:, 0], "x", 0.0)
    assert rep.passed and rep.provenance == "derived"


def test_bin_masses_match_normal_cdf():
    edges = np.linspace(-4, 4, 17)
    masses = target_bin_masses(lambda x: -0.5 * x[..., 0] ** 2, [(-4, 4)], (16,))
    exact = np.diff(norm.cdf(edges))
    np.testing.assert_allclose(masses, exact / exact.sum(), rtol=1e-9)


def test_bin_masses_2d_product():
    m2 = target_bin_masses(lambda x: -0.5 * np.sum(x**2, axis=-1), [(-3, 3), (-2, 2)], (6, 4))
    a = target_bin_masses(lambda x: -0.5 * x[..., 0] ** 2, [(-3, 3)], (6,))
    b = target_bin_masses(lambda x: -0.5 * x[..., 0] ** 2, [(-2, 2)], (4,))
    np.testing.assert_allclose(m2, np.outer(a, b), rtol=1e-12)


def test_kl_self_comparison_below_smoothing_bound(rng):
    # with q the empirical bin masses, p_i / q_i <= 1 + alpha on occupied bins, so KL <= alpha
    x = rng.standard_normal((50000, 1))
    counts, _ = np.histogram(x[:, 0], bins=np.linspace(-4, 4, 41))
    trace = histogram_kl(x, counts / counts.sum(), [(-4, 4)], 40, windows=[(0, len(x))])
    assert abs(trace[0][1]) <= KL_ALPHA
    assert trace.alpha == KL_ALPHA


def test_kl_stationary_chain_plateau(rng):
    x = rng.standard_normal((40000, 1))
    trace = histogram_kl(x, lambda p: -0.5 * p[..., 0] ** 2, [(-4, 4)], 30, windows=8, bootstrap=50, rng=rng)
    first, last = trace[0], trace[-1]
    assert last[1] <= first[1] + 4 * math.hypot(first[2], last[2])
    assert np.all(trace.values < 0.05)


def test_kl_decreases_from_far_start():
    target = bi.double_well(1)
    config = SamplerConfig(3000, dt=0.05)
    sampler = MalaSampler(target, config)
    chain = run_chain(sampler, np.array([2.5]), config, 3)
    trace = histogram_kl(chain, target.log_p, [(-2.5, 2.5)], 25, windows=6)
    assert trace[0][1] > trace[-1][1]
    assert trace[-1][0] == 3000


def test_kl_rejects_high_dim_and_bad_masses(rng):
    with pytest.raises(InvalidInputError):
        histogram_kl(rng.standard_normal((200, 3)), np.ones((2, 2, 2)), [(-1, 1)] * 3, 2)
    with pytest.raises(InvalidInputError):
        histogram_kl(rng.standard_normal((200, 1)), np.ones(5), [(-1, 1)], 4)


def test_kl_infinite_when_mass_lands_on_zero_target_bin():
    x = np.full((200, 1), 0.9)
    masses = np.array([1.0, 0.0])
    trace = histogram_kl(x, masses, [(0, 1)], 2, windows=1)
    assert trace[0][1] == math.inf


def test_kl_is_pure():
    x = np.random.default_rng(5).standard_normal((3000, 2))
    logp = lambda p: -0.5 * np.sum(p**2, axis=-1)
    a = histogram_kl(x, logp, [(-3, 3)] * 2, 10, bootstrap=10, rng=np.random.default_rng(1))
    b = histogram_kl(x, logp, [(-3, 3)] * 2, 10, bootstrap=10, rng=np.random.default_rng(1))
    assert a.to_dict() == b.to_dict()
    assert len(a.outside_fraction) == 10
