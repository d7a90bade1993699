import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from glslimit.constants import EstimatorMode
from glslimit.gls import estimator_weights
from glslimit.monte_carlo import (
    McConfig,
    empirical_estimator_covariance,
    peelle_demo,
    peelle_frequency,
    sample_correlated_noise,
)
from glslimit.validators import (
    NotNegativeWeightRegimeError,
    RankDeficientDesignError,
    ValidationError,
)

ONES = np.ones((2, 1))


def test_identity_noise_moments():
    trials = 100_000
    noise = sample_correlated_noise(np.eye(2), trials, seed=11)
    assert noise.shape == (trials, 2)
    covariance = np.cov(noise, rowvar=False)
    assert np.all(np.abs(np.diag(covariance) - 1.0) < 4 * np.sqrt(2.0 / trials))
    assert abs(covariance[0, 1]) < 4 / np.sqrt(trials)
    assert np.all(np.abs(noise.mean(axis=0)) < 4 / np.sqrt(trials))


def test_rank_one_noise_is_collinear(two_point_sigma):
    noise = sample_correlated_noise(two_point_sigma(1.0, 0.5, 1.0), 1000, seed=5)
    scale = np.maximum(1.0, np.abs(noise[:, 0]))
    assert np.all(np.abs(noise[:, 1] - 0.5 * noise[:, 0]) <= 1e-10 * scale)


def test_noise_is_deterministic(two_point_sigma):
    Sigma = two_point_sigma(1.0, 0.5, 0.8)
    first = sample_correlated_noise(Sigma, 500, seed=42)
    assert_array_equal(first, sample_correlated_noise(Sigma, 500, seed=42))
    assert not np.array_equal(first, sample_correlated_noise(Sigma, 500, seed=43))


def test_noise_does_not_depend_on_chunking(two_point_sigma):
    Sigma = two_point_sigma(1.0, 0.5, 0.8)
    reference = sample_correlated_noise(Sigma, 1000, seed=3)
    for chunks in (3, 7):
        assert_array_equal(reference, sample_correlated_noise(Sigma, 1000, seed=3, parallel_chunks=chunks))


def test_noise_trials_are_addressable():
    Sigma = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.5]])
    full = sample_correlated_noise(Sigma, 10, seed=9)
    tail = sample_correlated_noise(Sigma, 5, seed=9, start=5)
    assert_allclose(tail, full[5:], rtol=0, atol=1e-14)


def test_noise_validation():
    with pytest.raises(ValidationError):
        sample_correlated_noise(np.eye(2), 10, seed=-1)
    with pytest.raises(ValidationError):
        sample_correlated_noise(np.eye(2), 10, seed=2**64)
    with pytest.raises(ValidationError):
        sample_correlated_noise(np.eye(2), 0, seed=1)


def test_config_validation():
    with pytest.raises(ValidationError):
        McConfig(trials=1)
    with pytest.raises(ValidationError):
        McConfig(trials=100, parallel_chunks=0)
    assert McConfig(trials=100, beta_true=[1.0]).beta_true.tolist() == [1.0]


def test_blue_covariance_confirmed(two_point_sigma):
    config = McConfig(trials=100_000, seed=7, beta_true=[1.0])
    report = empirical_estimator_covariance(ONES, two_point_sigma(1.0, 0.5, 0.8), config)
    assert report.passed
    assert report.analytic_covariance[0, 0] == pytest.approx(0.2, rel=1e-12)
    standard_error = np.sqrt(2 * 0.2**2 / (config.trials - 1))
    assert abs(report.empirical_covariance[0, 0] - 0.2) <= 4 * standard_error
    assert report.negative_weights == [(0, 0)]
    assert report.outside_range_fraction is not None
    assert report.to_dict()["passed"] is True


def test_mean_of_independent_measurements():
    config = McConfig(trials=100_000, seed=1)
    report = empirical_estimator_covariance(np.ones((4, 1)), np.eye(4), config)
    assert report.passed
    assert report.analytic_covariance[0, 0] == pytest.approx(0.25)


def test_linear_design_confirmed():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    sigmas = np.array([1.0, 0.8, 1.5, 0.6, 1.1])
    R = 0.6 ** np.abs(np.subtract.outer(np.arange(5), np.arange(5)))
    config = McConfig(trials=100_000, seed=21, beta_true=[0.5, -1.0], parallel_chunks=4)
    report = empirical_estimator_covariance(X, np.outer(sigmas, sigmas) * R, config)
    assert report.passed
    assert report.outside_range_fraction is None


def test_mismatched_analytic_covariance_fails(two_point_sigma):
    config = McConfig(trials=100_000, seed=7)
    report = empirical_estimator_covariance(ONES, two_point_sigma(1.0, 0.5, 0.8), config, analytic_covariance=[[0.5]])
    assert not report.passed
    assert report.max_standardized_deviation > 4.0


def test_limit_mode_is_exact(two_point_sigma):
    config = McConfig(trials=10_000, seed=4, beta_true=[3.0])
    report = empirical_estimator_covariance(ONES, two_point_sigma(1.0, 0.5, 1.0), config, mode=EstimatorMode.LIMIT)
    assert report.passed
    assert report.empirical_covariance[0, 0] <= 1e-20
    assert report.empirical_mean[0] == pytest.approx(3.0, abs=1e-12)
    assert report.analytic_covariance[0, 0] == 0.0


def test_limit_mode_needs_noise_free_equations(two_point_sigma):
    config = McConfig(trials=1000, seed=4)
    with pytest.raises(RankDeficientDesignError):
        empirical_estimator_covariance(ONES, two_point_sigma(1.0, 1.0, 1.0), config, mode="limit")


def test_too_few_trials(two_point_sigma):
    with pytest.raises(ValidationError):
        empirical_estimator_covariance(ONES, two_point_sigma(1.0, 0.5, 0.8), McConfig(trials=50))


def test_blue_beats_unweighted_mean(two_point_sigma):
    Sigma = two_point_sigma(1.0, 0.5, 0.8)
    y = 1.0 + sample_correlated_noise(Sigma, 20_000, seed=3)
    blue = y @ estimator_weights(ONES, Sigma)[0]
    assert np.var(blue, ddof=1) < np.var(y.mean(axis=1), ddof=1)


def test_peelle_demo():
    record = peelle_demo(1.0, 0.5, 0.6, mu=0.0, seed=8, trial=3)
    assert record.weights[0] < 0
    assert sum(record.weights) == pytest.approx(1.0)
    noise = sample_correlated_noise(np.array([[1.0, 0.3], [0.3, 0.25]]), 1, 8, start=3)[0]
    assert record.y == pytest.approx(tuple(noise))
    assert record.estimate == pytest.approx(record.weights[0] * record.y[0] + record.weights[1] * record.y[1])
    assert record.outside_range == (record.below_range or record.above_range)
    assert set(record.to_dict()) >= {"weights", "y", "estimate", "below_range", "above_range"}


def test_peelle_validation():
    with pytest.raises(NotNegativeWeightRegimeError):
        peelle_demo(1.0, 0.5, 0.49, mu=0.0, seed=1)
    with pytest.raises(ValidationError):
        peelle_demo(0.5, 1.0, 0.9, mu=0.0, seed=1)
    with pytest.raises(ValidationError):
        peelle_demo(1.0, 0.5, 1.0, mu=0.0, seed=1)


def test_peelle_frequency_strong_correlation():
    summary = peelle_frequency(1.0, 0.5, 0.99, mu=0.0, trials=2000, seed=12)
    assert summary.negative_w1_all
    assert summary.outside_fraction > 0.5
    assert summary.outside_fraction == pytest.approx(summary.below_fraction + summary.above_fraction)
