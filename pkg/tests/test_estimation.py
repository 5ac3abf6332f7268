import warnings

import numpy as np
import pytest

from markedratio.estimation import (
    QbeConfig,
    SingularInformationError,
    empirical_gamma,
    fit_qbe,
    fit_qmle,
    newton_block,
    theoretical_gamma_example1,
    theoretical_sd,
)
from markedratio.likelihood import EventDesign, multinomial_loglik, pooled_loglik
from markedratio.model import EventStream, InvalidInputError, ModelSpec, ParamSet
from markedratio.simulation import GroundTruth, HawkesParams, MarkovChainParams, simulate_marked_process
from oracles import irls_logistic


@pytest.mark.parametrize("seed", range(5))
def test_side_qmle_equals_irls(seed):
    rng = np.random.default_rng(seed)
    n = 400
    z = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + 1.2 * z[:, 1])))).astype(np.int64)
    fit = newton_block(y, z, 2)
    np.testing.assert_allclose(fit.estimate[0], irls_logistic(y, z), atol=1e-6)
    assert fit.converged


def test_example1_qmle_at_3000(ex1):
    truth, spec = ex1
    stream, path = simulate_marked_process(truth, spec, 3000.0, seed=41)
    fit = fit_qmle(EventDesign.from_path(stream, path, spec))
    assert fit.converged
    est = fit.estimate.to_vector()
    assert np.all(np.abs(est - [1.5, 1.0, 2.0]) < 4 * fit.std_errors)
    assert fit.gradient_norm < 1e-8 * (1 + abs(fit.loglik))


def test_zero_truth_estimate_near_zero():
    spec = ModelSpec((2, 2), ("X1",), (("Y1",), ("Y1",)))
    truth = GroundTruth(np.zeros((2, 1)), [np.zeros((2, 1)), np.zeros((2, 1))], HawkesParams(0.5, 1.0, 2.0),
                        {"X1": MarkovChainParams(0.5), "Y1": MarkovChainParams(0.5)})
    stream, path = simulate_marked_process(truth, spec, 1000.0, seed=42)
    fit = fit_qmle(EventDesign.from_path(stream, path, spec))
    assert np.all(np.abs(fit.estimate.to_vector()) < 4 * fit.std_errors)


def test_newton_monotone_and_initialization_free(ex1_path_1000, ex1):
    _, spec = ex1
    stream, path = ex1_path_1000
    d = EventDesign.from_path(stream, path, spec)
    a = fit_qmle(d)
    b = fit_qmle(d, init=ParamSet.from_vector(spec, [-3.0, 4.0, -5.0]))
    np.testing.assert_allclose(a.estimate.to_vector(), b.estimate.to_vector(), atol=1e-7)
    # loglik never decreases along the Newton path: restart from each iterate prefix
    labels, z, m = d.side_block()
    values = [multinomial_loglik(labels, z, np.array([[x]]), m).value for x in np.linspace(0, a.side.estimate[0, 0], 6)]
    assert np.all(np.diff(values) >= -1e-9)


def test_convergence_invariant(ex1_path_1000, ex1):
    _, spec = ex1
    stream, path = ex1_path_1000
    fit = fit_qmle(EventDesign.from_path(stream, path, spec))
    for b in fit.blocks:
        assert b.converged
        assert b.gradient_norm < 1e-8 * (1 + abs(b.loglik))
        assert np.all(np.isfinite(b.std_errors))


def test_constant_covariate_is_singular():
    n = 50
    z = np.column_stack([np.ones(n), np.full(n, 2.0)])
    labels = np.arange(n) % 2
    with pytest.raises(SingularInformationError, match="bid"):
        newton_block(labels, z, 2, name="bid")


def test_block_without_events_not_identified():
    spec = ModelSpec((2, 2), ("X",), (("Y",), ("Y",)))
    from markedratio.model import CovariatePath
    stream = EventStream([0.1, 0.2, 0.3], [0, 0, 0], [0, 1, 1], 1.0)
    path = CovariatePath([0.0, 0.15, 0.25], ("X", "Y"), [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]], 1.0)
    with pytest.warns(RuntimeWarning, match="boundary"):
        fit = fit_qmle(EventDesign.from_path(stream, path, spec))
    assert not fit.marks[1].identified
    assert np.all(np.isnan(fit.marks[1].std_errors))


def test_separated_data_hits_box():
    z = np.column_stack([np.ones(20), np.linspace(-1, 1, 20)])
    labels = (z[:, 1] > 0).astype(np.int64)
    fit = newton_block(labels, z, 2, bound=5.0)
    assert fit.on_boundary
    assert np.all(np.abs(fit.estimate) <= 5.0)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        assert fit.converged


def test_wald_intervals_shape(ex1_path_1000, ex1):
    _, spec = ex1
    stream, path = ex1_path_1000
    fit = fit_qmle(EventDesign.from_path(stream, path, spec))
    ci = fit.wald_intervals(0.95)
    est = fit.estimate.to_vector()
    assert ci.shape == (3, 2)
    np.testing.assert_allclose((ci[:, 1] - ci[:, 0]) / 2, 1.959964 * fit.std_errors, rtol=1e-6)
    assert np.all((ci[:, 0] < est) & (est < ci[:, 1]))


def test_fit_report_serializes(ex1_path_1000, ex1):
    _, spec = ex1
    stream, path = ex1_path_1000
    d = fit_qmle(EventDesign.from_path(stream, path, spec)).to_dict()
    assert d["method"] == "qmle" and len(d["labels"]) == 3 and len(d["blocks"]) == 3


def test_theoretical_gamma_values(ex1):
    truth, spec = ex1
    g = theoretical_gamma_example1(truth, spec)
    np.testing.assert_allclose(g, [0.38619, 0.25455, 0.13593], atol=5e-5)


@pytest.mark.parametrize("horizon, expected", [
    (100, (0.161, 0.198, 0.271)),
    (300, (0.093, 0.114, 0.157)),
    (1000, (0.051, 0.063, 0.086)),
    (3000, (0.029, 0.036, 0.050)),
])
def test_theoretical_sd_table(ex1, horizon, expected):
    truth, spec = ex1
    sd = theoretical_sd(theoretical_gamma_example1(truth, spec), horizon)
    np.testing.assert_array_equal(np.round(sd, 3), expected)


def test_theoretical_gamma_rejects_shape():
    truth = GroundTruth(np.zeros((3, 1)), [np.zeros((2, 1))] * 3, HawkesParams(0.5, 1.0, 2.0))
    with pytest.raises(InvalidInputError):
        theoretical_gamma_example1(truth)


def test_empirical_gamma_definition(ex1_path_1000, ex1):
    truth, spec = ex1
    stream, path = ex1_path_1000
    d = EventDesign.from_path(stream, path, spec)
    g = empirical_gamma(d, truth.params())
    np.testing.assert_array_equal(g, pooled_loglik(d, truth.params()).neg_hessian / 1000.0)
    assert not (g - np.diag(np.diag(g))).any()
    empty = EventDesign.from_path(EventStream([], [], [], 1000.0), path, spec)
    assert not empirical_gamma(empty, truth.params()).any()


def test_qbe_close_to_qmle(ex1):
    truth, spec = ex1
    stream, path = simulate_marked_process(truth, spec, 3000.0, seed=43)
    d = EventDesign.from_path(stream, path, spec)
    qmle = fit_qmle(d)
    qbe = fit_qbe(d, QbeConfig(n_samples=20000, burn_in=4000, seed=1))
    assert np.all(np.abs(qbe.estimate.to_vector() - qmle.estimate.to_vector()) < 0.02)
    mcse = np.concatenate([b.mc_std_errors for b in qbe.blocks])
    assert np.all(mcse < 0.005)
    assert all(0.05 <= b.acceptance_rate <= 0.8 for b in qbe.blocks)


def test_qbe_flat_likelihood_prior_mean():
    spec = ModelSpec((2, 2), ("X",), (("Y",), ("Y",)))
    from markedratio.model import CovariatePath
    stream = EventStream([], [], [], 10.0)
    path = CovariatePath([0.0], ("X", "Y"), [[1.0, 1.0]], 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_qbe(EventDesign.from_path(stream, path, spec), QbeConfig(n_samples=40000, burn_in=2000, seed=3, bound=2.0))
    for b in fit.blocks:
        assert abs(b.estimate.ravel()[0]) < 4 * b.mc_std_errors[0] + 1e-3


def test_qbe_joint_equals_blockwise(ex1_path_1000, ex1):
    _, spec = ex1
    stream, path = ex1_path_1000
    d = EventDesign.from_path(stream, path, spec)
    block = fit_qbe(d, QbeConfig(n_samples=30000, burn_in=5000, seed=4))
    joint = fit_qbe(d, QbeConfig(n_samples=30000, burn_in=5000, seed=5, joint=True))
    se = np.hypot(np.concatenate([b.mc_std_errors for b in block.blocks]),
                  np.concatenate([b.mc_std_errors for b in joint.blocks]))
    assert np.all(np.abs(block.estimate.to_vector() - joint.estimate.to_vector()) < 3 * se + 1e-3)


def test_qbe_chain_length_invariance(ex1_path_1000, ex1):
    _, spec = ex1
    stream, path = ex1_path_1000
    d = EventDesign.from_path(stream, path, spec)
    a = fit_qbe(d, QbeConfig(n_samples=20000, burn_in=4000, seed=6))
    b = fit_qbe(d, QbeConfig(n_samples=40000, burn_in=4000, seed=6))
    se = np.concatenate([x.mc_std_errors for x in a.blocks])
    assert np.all(np.abs(a.estimate.to_vector() - b.estimate.to_vector()) < 2 * np.sqrt(2) * se + 1e-3)


def test_qbe_config_validation():
    with pytest.raises(InvalidInputError):
        QbeConfig(n_samples=100, burn_in=100)
