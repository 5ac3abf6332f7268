import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from markedratio.hawkes import (
    _target_loglik_grad,
    aggregate_same_timestamps,
    fit_exp_hawkes_1d,
    fit_multivariate_hawkes,
    fit_multivariate_hawkes_4d,
    hawkes_log_intensity_path,
    hawkes_loglik,
    merge_streams,
    naive_loglik,
    ExpHawkesFit,
)
from markedratio.simulation import HawkesParams, simulate_hawkes, simulate_multivariate_hawkes


@pytest.fixture(scope="module")
def hawkes_5000():
    return simulate_hawkes(HawkesParams(0.5, 1.0, 2.0), 5000.0, seed=51, burn_in=0.0).times


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_recursion_matches_naive(seed, D):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 500))
    times = np.sort(rng.uniform(0, 100, n))
    labels = rng.integers(0, D, n)
    mu = rng.uniform(0.1, 2)
    alpha = rng.uniform(0, 1, D)
    beta = rng.uniform(0.2, 5, D)
    target = int(rng.integers(0, D))
    ll, *_ = _target_loglik_grad(times, labels, target, 100.0, mu, alpha, beta)
    assert ll == pytest.approx(naive_loglik(times, labels, target, 100.0, mu, alpha, beta), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_hawkes_gradient(seed):
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, 200, 300))
    labels = rng.integers(0, 2, 300)
    x = np.array([0.4, 0.3, 0.5, 1.5, 0.8])

    def f(v):
        return _target_loglik_grad(times, labels, 0, 200.0, v[0], v[1:3], v[3:5])[0]

    _, g_mu, g_a, g_b = _target_loglik_grad(times, labels, 0, 200.0, x[0], x[1:3], x[3:5])
    g = np.concatenate([[g_mu], g_a, g_b])
    fd = np.array([(f(x + h) - f(x - h)) / 2e-6 for h in np.eye(5) * 1e-6])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_poisson_data_fit():
    rng = np.random.default_rng(52)
    times = np.sort(rng.uniform(0, 5000, rng.poisson(10_000)))
    fit = fit_exp_hawkes_1d(times, 5000.0)
    assert fit.branching_ratio <= 0.05
    total_rate = fit.mu / (1 - fit.branching_ratio)
    assert total_rate == pytest.approx(len(times) / 5000.0, rel=0.05)
    assert fit.mu == pytest.approx(2.0, rel=0.05)


def test_parameter_recovery(hawkes_5000):
    fit = fit_exp_hawkes_1d(hawkes_5000, 5000.0)
    assert fit.converged and not fit.unstable
    np.testing.assert_allclose([fit.mu, fit.alpha, fit.beta], [0.5, 1.0, 2.0], rtol=0.15)


def test_single_event_fallback():
    with pytest.warns(RuntimeWarning, match="Poisson"):
        fit = fit_exp_hawkes_1d(np.array([3.0]), 100.0)
    assert fit.alpha == 0.0 and fit.mu == pytest.approx(1 / 100.0)


def test_fit_residuals_pass_ks(hawkes_5000):
    fit = fit_exp_hawkes_1d(hawkes_5000, 5000.0)
    t = hawkes_5000
    comp = np.empty(len(t))
    acc, prev, exc = 0.0, 0.0, 0.0
    for n, s in enumerate(t):
        d = s - prev
        acc += fit.mu * d + exc * (1 - np.exp(-fit.beta * d)) / fit.beta
        exc = exc * np.exp(-fit.beta * d) + fit.alpha
        comp[n] = acc
        prev = s
    assert stats.kstest(np.diff(np.concatenate([[0.0], comp])), "expon").pvalue > 1e-3


def test_log_intensity_path_cases():
    fit = ExpHawkesFit(0.5, 1.0, 2.0, 0.0, True)
    np.testing.assert_allclose(hawkes_log_intensity_path(fit, [], [1.0, 2.0]), np.log(0.5))
    out = hawkes_log_intensity_path(fit, [1.0], [1.0, 1.3])
    assert out[0] == pytest.approx(np.log(0.5))  # left limit excludes the coincident jump
    assert out[1] == pytest.approx(np.log(0.5 + np.exp(-2 * 0.3)))
    # unsorted queries
    q = np.array([5.0, 1.3, 3.0])
    np.testing.assert_allclose(hawkes_log_intensity_path(fit, [1.0, 2.0], q),
                               [hawkes_log_intensity_path(fit, [1.0, 2.0], [v])[0] for v in q])


@given(st.floats(0.5, 9.5))
def test_log_intensity_predictable(t):
    fit = ExpHawkesFit(0.2, 0.7, 1.3, 0.0, True)
    src = np.array([0.25, 0.5, 9.9])
    before = hawkes_log_intensity_path(fit, src, [t])[0]
    moved = hawkes_log_intensity_path(fit, np.sort(np.append(src, t)), [t])[0]
    assert moved == before


def test_aggregate_timestamps():
    np.testing.assert_array_equal(aggregate_same_timestamps([1.0, 1.0, 0.5, 2.0]), [0.5, 1.0, 2.0])


def test_loglik_helper_matches_kernel(hawkes_5000):
    fit = fit_exp_hawkes_1d(hawkes_5000, 5000.0)
    assert hawkes_loglik(fit, hawkes_5000, 5000.0) == pytest.approx(fit.loglik, rel=1e-10)


@pytest.fixture(scope="module")
def diagonal_4d():
    mu = np.array([0.3, 0.2, 0.25, 0.15])
    alpha = np.diag([0.9, 0.6, 1.0, 0.5])
    beta = np.full((4, 4), 1.5)
    return simulate_multivariate_hawkes(mu, alpha, beta, 4000.0, seed=53)


def test_4d_diagonal_truth(diagonal_4d):
    fit = fit_multivariate_hawkes_4d(diagonal_4d, 4000.0)
    assert fit.spectral_radius < 1
    # compare integrated kernels alpha/beta: a sharp spurious kernel can carry a large alpha
    ratio = fit.alpha / fit.beta
    for a in range(4):
        off = np.delete(ratio[a], a)
        assert np.all(off < 0.2 * ratio[a, a])


def test_4d_reduces_to_1d_when_diagonal(diagonal_4d):
    diag = fit_multivariate_hawkes(diagonal_4d, 4000.0, diagonal_only=True)
    for a in range(4):
        one = fit_exp_hawkes_1d(diagonal_4d[a], 4000.0)
        assert diag.alpha[a, a] == pytest.approx(one.alpha, rel=1e-3)
        assert diag.mu[a] == pytest.approx(one.mu, rel=1e-3)
    assert np.count_nonzero(diag.alpha - np.diag(np.diag(diag.alpha))) == 0
    full = fit_multivariate_hawkes_4d(diagonal_4d, 4000.0)
    assert full.loglik >= diag.loglik - 1e-6


def test_intensities_at_events(diagonal_4d):
    fit = fit_multivariate_hawkes_4d(diagonal_4d, 4000.0)
    times, labels = merge_streams(diagonal_4d)
    lam = fit.intensities_at_events(times[:50], labels[:50])
    n = 30
    direct = fit.mu + np.array([
        sum(fit.alpha[:, labels[m]] * np.exp(-fit.beta[:, labels[m]] * (times[n] - times[m])) for m in range(n))
    ])[0]
    np.testing.assert_allclose(lam[n], direct, rtol=1e-10)


def test_4d_needs_four_streams():
    with pytest.raises(ValueError):
        fit_multivariate_hawkes_4d([np.array([1.0])], 10.0)


def test_multivariate_sparse_dimension():
    rng = np.random.default_rng(0)
    streams = [np.sort(rng.uniform(0, 100, 50)), np.array([5.0])]
    with pytest.warns(RuntimeWarning):
        fit = fit_multivariate_hawkes(streams, 100.0)
    assert fit.alpha[1].sum() == 0.0 and fit.mu[1] == pytest.approx(0.01)
