import numpy as np
import pytest
from scipy import stats

from markedratio.lob import LobConfig, event_covariates, simulate_synthetic_lob
from markedratio.model import InvalidInputError, ModelSpec
from markedratio.simulation import (
    GroundTruth,
    HawkesParams,
    MarkovChainParams,
    simulate_hawkes,
    simulate_marked_process,
    simulate_markov_covariate,
    simulate_multivariate_hawkes,
    true_compensator,
)


def test_hawkes_params_validation():
    with pytest.raises(InvalidInputError):
        HawkesParams(0.5, 2.0, 2.0)
    with pytest.raises(InvalidInputError):
        HawkesParams(-0.1, 0.0, 1.0)
    assert HawkesParams(0.5, 1.0, 2.0).mean_intensity == pytest.approx(1.0)


def test_hawkes_poisson_degenerate():
    path = simulate_hawkes(HawkesParams(0.5, 0.0, 1.0), 10_000.0, seed=1)
    assert abs(len(path.times) - 5000) < 3 * np.sqrt(5000)


def test_hawkes_mean_rate():
    path = simulate_hawkes(HawkesParams(0.5, 1.0, 2.0), 10_000.0, seed=2)
    assert len(path.times) / 10_000.0 == pytest.approx(1.0, rel=0.05)


def test_hawkes_empty_and_negative_horizon():
    assert len(simulate_hawkes(HawkesParams(0.5, 1.0, 2.0), 0.0, seed=1).times) == 0
    with pytest.raises(InvalidInputError):
        simulate_hawkes(HawkesParams(0.5, 1.0, 2.0), -1.0, seed=1)


def test_hawkes_intensity_recursion():
    params = HawkesParams(0.5, 1.0, 2.0)
    path = simulate_hawkes(params, 50.0, seed=3)
    t = path.times
    assert np.all(np.diff(t) > 0) and t[0] > 0 and t[-1] <= 50.0
    q = np.sort(np.random.default_rng(0).uniform(0, 50, 40))
    direct = np.array([params.mu + path.initial_excess * np.exp(-params.beta * s)
                       + params.alpha * np.sum(np.exp(-params.beta * (s - t[t <= s]))) for s in q])
    np.testing.assert_allclose(path.intensity(q), direct, rtol=1e-10)
    # left limits drop the jump at an event time
    left = path.intensity(t[:5], left=True)
    right = path.intensity(t[:5])
    np.testing.assert_allclose(right - left, params.alpha, rtol=1e-10)


def test_hawkes_time_rescaling():
    params = HawkesParams(0.5, 1.0, 2.0)
    path = simulate_hawkes(params, 5000.0, seed=4)
    t = path.times
    # compensator by exact integration between events
    comp = np.empty(len(t))
    acc, prev, exc = 0.0, 0.0, path.initial_excess
    for n, s in enumerate(t):
        d = s - prev
        acc += params.mu * d + exc * (1 - np.exp(-params.beta * d)) / params.beta
        exc = exc * np.exp(-params.beta * d) + params.alpha
        comp[n] = acc
        prev = s
    assert stats.kstest(np.diff(np.concatenate([[0.0], comp])), "expon").pvalue > 1e-3


def test_markov_chain_time_average_and_holding():
    params = MarkovChainParams(0.5)
    path = simulate_markov_covariate(params, 100_000.0, seed=5)
    b = path.breakpoints
    durations = np.diff(np.append(b, path.horizon))
    avg = np.sum(durations * path.values[:, 0]) / path.horizon
    assert abs(avg) < 0.02
    holding = np.diff(b[1:])
    assert len(holding) > 10_000
    assert holding.mean() == pytest.approx(2.0, rel=0.02)
    assert set(np.unique(path.values)) == {-1.0, 1.0}
    assert np.all(path.values[1:, 0] == -path.values[:-1, 0])


def test_markov_chain_constant_with_tiny_rate():
    path = simulate_markov_covariate(MarkovChainParams(1e-12, initial=1), 1000.0, seed=6)
    assert len(path.breakpoints) == 1 and path.values[0, 0] == 1.0


def test_example1_conditional_side_fraction(ex1):
    truth, spec = ex1
    stream, path = simulate_marked_process(truth, spec, 3000.0, seed=7)
    x = path.left_limits(stream.times, ["X1"])[:, 0]
    frac = np.mean(stream.types[x > 0] == 1)
    assert frac == pytest.approx(np.exp(0.75) / (np.exp(-0.75) + np.exp(0.75)), abs=0.01)


def test_example1_total_rate(ex1):
    truth, spec = ex1
    stream, _ = simulate_marked_process(truth, spec, 3000.0, seed=8)
    # Lambda = lambda0 * sum_i exp(x vartheta^i); X is independent of lambda0 and symmetric
    expected = truth.baseline.mean_intensity * 2 * np.cosh(0.75)
    assert len(stream) / 3000.0 == pytest.approx(expected, rel=0.05)


def test_zero_truth_uniform_categories():
    spec = ModelSpec((2, 2), ("X1",), (("Y1",), ("Y1",)))
    truth = GroundTruth(np.zeros((2, 1)), [np.zeros((2, 1)), np.zeros((2, 1))], HawkesParams(0.5, 1.0, 2.0),
                        {"X1": MarkovChainParams(0.5), "Y1": MarkovChainParams(0.5)})
    stream, _ = simulate_marked_process(truth, spec, 2000.0, seed=9)
    counts = np.bincount(2 * stream.types + stream.marks, minlength=4)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_reproducible_and_no_ties(ex1):
    truth, spec = ex1
    a, pa = simulate_marked_process(truth, spec, 500.0, seed=10)
    b, pb = simulate_marked_process(truth, spec, 500.0, seed=10)
    c, _ = simulate_marked_process(truth, spec, 500.0, seed=11)
    assert a.times.tobytes() == b.times.tobytes() and a.marks.tobytes() == b.marks.tobytes()
    np.testing.assert_array_equal(pa.values, pb.values)
    assert len(a) != len(c) or not np.array_equal(a.times, c.times)
    assert np.all(np.diff(a.times) > 0)
    a.validate(spec)


def test_zero_horizon_marked(ex1):
    truth, spec = ex1
    stream, _ = simulate_marked_process(truth, spec, 0.0, seed=1)
    assert len(stream) == 0


@pytest.mark.parametrize("type_i, mark", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_time_rescaling_per_category(ex1, type_i, mark):
    truth, spec = ex1
    stream, path = simulate_marked_process(truth, spec, 5000.0, seed=21)
    t = stream.times_of(type_i, mark)
    comp = true_compensator(truth, spec, path, t, type_i, mark)
    gaps = np.diff(np.concatenate([[0.0], comp]))
    assert stats.kstest(gaps, "expon").pvalue > 1e-3


def test_compensator_total_matches_count(ex1):
    truth, spec = ex1
    stream, path = simulate_marked_process(truth, spec, 3000.0, seed=22)
    total = sum(true_compensator(truth, spec, path, [3000.0], i)[0] for i in range(2))
    assert abs(total - len(stream)) < 4 * np.sqrt(len(stream))


def test_multivariate_hawkes_rates():
    mu = np.array([0.3, 0.2])
    alpha = np.array([[0.8, 0.0], [0.4, 0.5]])
    beta = np.full((2, 2), 2.0)
    streams = simulate_multivariate_hawkes(mu, alpha, beta, 5000.0, seed=3)
    expected = np.linalg.solve(np.eye(2) - alpha / beta, mu)
    rates = np.array([len(s) for s in streams]) / 5000.0
    np.testing.assert_allclose(rates, expected, rtol=0.1)
    with pytest.raises(InvalidInputError):
        simulate_multivariate_hawkes(mu, alpha * 4, beta, 10.0)


@pytest.fixture(scope="module")
def lob_day():
    return simulate_synthetic_lob(LobConfig(), horizon=3 * 3600, seed=31)


def test_lob_covariate_ranges(lob_day):
    stream, path = lob_day
    cols = event_covariates(stream, path)
    assert np.all(np.abs(cols["Z1"]) <= 1)
    assert set(np.unique(cols["Z2"])) <= {-1.0, 1.0}
    assert set(np.unique(cols["Z3"])) <= {-1.0, 1.0}
    assert np.all(cols["Z0"] == 1.0)
    stream.validate(LobConfig().spec)


def test_lob_imbalance_drives_side(lob_day):
    stream, path = lob_day
    z1 = event_covariates(stream, path)["Z1"]
    assert len(stream) > 5000
    hi = np.mean(stream.types[z1 > 0.5] == 1)
    lo = np.mean(stream.types[z1 < -0.5] == 1)
    assert hi > lo


def test_lob_last_sign_is_predictable(lob_day):
    stream, path = lob_day
    z2 = event_covariates(stream, path)["Z2"]
    prev_sign = np.where(stream.types[:-1] == 1, 1.0, -1.0)
    np.testing.assert_array_equal(z2[1:], prev_sign)


def test_lob_zero_loadings_balanced_side():
    cfg = LobConfig(raw_side=((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)))
    stream, _ = simulate_synthetic_lob(cfg, horizon=4 * 3600, seed=32)
    assert np.mean(stream.types == 1) == pytest.approx(0.5, abs=0.02)


def test_lob_reproducible():
    a, pa = simulate_synthetic_lob(LobConfig(), horizon=600, seed=5)
    b, pb = simulate_synthetic_lob(LobConfig(), horizon=600, seed=5)
    assert a.times.tobytes() == b.times.tobytes()
    np.testing.assert_array_equal(pa.values, pb.values)


def test_lob_config_roundtrip_and_strict():
    cfg = LobConfig()
    again = LobConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(InvalidInputError):
        LobConfig.from_dict({"horizon": 10, "bogus": 1})
    with pytest.raises(InvalidInputError):
        LobConfig(side_covariates=("Z0", "Z4"), raw_side=((0, 0), (0, 0)))


def test_lob_true_probabilities_normalized(lob_day):
    stream, path = lob_day
    p = LobConfig().true_probabilities(event_covariates(stream, path))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
