import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from glslimit.correlation import ar1_correlation
from glslimit.gls import ar1_precision
from glslimit.sampling import (
    SamplingPlan,
    SnrProfile,
    ar1_mean_inverse_variance,
    asymptotic_kernels,
    delta_at_max_variance,
    inverse_variance_asymptotic,
    inverse_variance_exact,
    inverse_variance_kernel_form,
    limiting_variance,
    variance_at,
    variance_curve_vs_delta,
    variance_curve_vs_n,
)
from glslimit.validators import (
    CorrelationOverflowError,
    NoInteriorMaximumError,
    OutsideRegimeError,
    ValidationError,
)

FLAT = SnrProfile.linear(1.0, 0.0)
RAMP = SnrProfile.linear(1.0, 1.0)


def test_profile_integrals():
    assert RAMP.integral_tau_squared() == pytest.approx(7.0 / 3.0, rel=1e-15)
    assert RAMP.integral_derivative_squared() == 1.0
    assert RAMP.endpoints_squared() == pytest.approx(5.0)
    normalized = SnrProfile.normalized_linear(1.0)
    assert normalized.tau0 == 0.5
    assert float(normalized.tau(1.0)) == pytest.approx(1.0)


def test_profile_validation():
    with pytest.raises(ValidationError):
        SnrProfile.linear(0.0, 1.0)
    with pytest.raises(ValidationError):
        SnrProfile.linear(1.0, -1.0)
    with pytest.raises(ValidationError):
        SnrProfile.tabulated([0.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValidationError):
        SnrProfile.tabulated([0.0, 0.5, 1.0], [1.0, -0.2, 1.0])


def test_tabulated_profile_matches_linear():
    grid = np.linspace(0.0, 1.0, 11)
    profile = SnrProfile.tabulated(grid, 1.0 + grid)
    assert profile.integral_tau_squared() == pytest.approx(7.0 / 3.0, rel=1e-6)
    assert profile.integral_derivative_squared() == pytest.approx(1.0, rel=1e-10)
    assert delta_at_max_variance(profile) == pytest.approx(math.sqrt(7.0 / 3.0), rel=1e-6)


def test_three_term_identity_matches_dense_quadratic_form(rng):
    for _ in range(50):
        size = int(rng.integers(2, 65))
        rho = float(rng.uniform(0.0, 0.999))
        taus = rng.uniform(0.5, 2.0, size=size)
        dense = taus @ ar1_precision(size, rho).toarray() @ taus
        assert ar1_mean_inverse_variance(taus, rho) == pytest.approx(dense, rel=1e-11)


def test_three_term_identity_matches_inverse(rng):
    for _ in range(10):
        size = int(rng.integers(2, 11))
        rho = float(rng.uniform(0.0, 0.9))
        taus = rng.uniform(0.5, 2.0, size=size)
        dense = taus @ np.linalg.inv(ar1_correlation(size, rho).values) @ taus
        assert ar1_mean_inverse_variance(taus, rho) == pytest.approx(dense, rel=1e-10)


def test_plan_geometry():
    plan = SamplingPlan(n=4, delta=0.5, profile=RAMP)
    assert_allclose(plan.locations, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert_allclose(plan.taus, [1.0, 1.25, 1.5, 1.75, 2.0])
    assert plan.x == pytest.approx(0.5)
    assert plan.rho == pytest.approx(math.exp(-0.5))
    assert SamplingPlan(n=3, delta=0.0, profile=RAMP).rho == 0.0
    with pytest.raises(ValidationError):
        SamplingPlan(n=0, delta=1.0, profile=RAMP)
    with pytest.raises(ValidationError):
        SamplingPlan(n=3, delta=-1.0, profile=RAMP)


def test_exact_inverse_variance_examples():
    uncorrelated = SamplingPlan(n=4, delta=0.0, profile=RAMP)
    assert inverse_variance_exact(uncorrelated) == pytest.approx(1 + 1.5625 + 2.25 + 3.0625 + 4)

    plan = SamplingPlan(n=4, delta=0.5, profile=RAMP)
    dense = plan.taus @ ar1_precision(5, math.exp(-0.5)).toarray() @ plan.taus
    assert inverse_variance_exact(plan) == pytest.approx(dense, rel=1e-12)


def test_exact_inverse_variance_overflow():
    with pytest.raises(CorrelationOverflowError):
        inverse_variance_exact(SamplingPlan(n=10, delta=1e15, profile=RAMP))
    assert variance_at(RAMP, 10, 1e15) == limiting_variance(RAMP, 1e15)


@pytest.mark.parametrize("n, delta", [(10, 0.3), (50, 2.0), (3, 1e-3), (7, 1e4)])
def test_kernel_form_matches_exact(n, delta):
    plan = SamplingPlan(n=n, delta=delta, profile=RAMP)
    assert inverse_variance_kernel_form(plan) == pytest.approx(inverse_variance_exact(plan), rel=1e-12)


def test_kernels():
    f, g = asymptotic_kernels(1e-6)
    assert f == pytest.approx(0.5, abs=1e-10)
    assert g == pytest.approx(0.5, abs=1e-10)

    f, g = asymptotic_kernels(1.0)
    assert f == pytest.approx((1 - math.exp(-1)) / (1 + math.exp(-1)), rel=1e-12)
    assert g == pytest.approx(math.exp(-1) / (1 - math.exp(-2)), rel=1e-12)

    x = 0.99999e-4
    f, g = asymptotic_kernels(x)
    assert f == pytest.approx(math.tanh(x / 2) / x, abs=1e-12)
    assert g == pytest.approx(x / (2 * math.sinh(x)), abs=1e-12)

    with pytest.raises(ValidationError):
        asymptotic_kernels(0.0)


def test_asymptotic_examples():
    for delta in (0.5, 2.0):
        assert inverse_variance_asymptotic(FLAT, delta, 100).value == pytest.approx(1 / (2 * delta) + 1, rel=1e-14)
    result = inverse_variance_asymptotic(RAMP, 1.0, 100)
    assert result.value == pytest.approx(0.5 + 7.0 / 6.0 + 2.5, rel=1e-14)
    assert result.neglected_order == pytest.approx((0.5 + 7.0 / 6.0) * 1e-4, rel=1e-12)
    with pytest.raises(OutsideRegimeError):
        inverse_variance_asymptotic(RAMP, 0.1, 10)


@pytest.mark.parametrize("profile", [RAMP, SnrProfile.normalized_linear(1.0)])
def test_asymptotic_gap_is_second_order(profile):
    def gap(n):
        exact = inverse_variance_exact(SamplingPlan(n=n, delta=1.0, profile=profile))
        return abs(exact - inverse_variance_asymptotic(profile, 1.0, n).value)

    for n in (16, 32, 64):
        assert gap(n) / gap(2 * n) >= 3.5


def test_limiting_variance_examples():
    for delta in (0.01, 0.5, 3.0, 40.0):
        assert limiting_variance(FLAT, delta) == pytest.approx(2 * delta / (2 * delta + 1), rel=1e-14)
        assert limiting_variance(RAMP, delta) == pytest.approx(2 * delta / (7 / 3 + 5 * delta + delta**2), rel=1e-14)
    assert limiting_variance(RAMP, 1e6) * 1e6 == pytest.approx(2.0, rel=1e-4)
    assert limiting_variance(RAMP, 1e-9) < 1e-8


def test_delta_at_max_variance():
    assert delta_at_max_variance(RAMP) == pytest.approx(math.sqrt(7.0 / 3.0), rel=1e-14)
    assert delta_at_max_variance(SnrProfile.linear(3.0, 1.0)) == pytest.approx(delta_at_max_variance(RAMP), rel=1e-14)
    with pytest.raises(NoInteriorMaximumError):
        delta_at_max_variance(FLAT)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_delta_at_max_matches_grid_search(alpha):
    profile = SnrProfile.linear(1.0, alpha)
    grid = np.arange(0.001, 10.0, 0.001)
    values = [limiting_variance(profile, d) for d in grid]
    assert abs(grid[int(np.argmax(values))] - delta_at_max_variance(profile)) <= 1.5e-3


def test_curve_vs_delta_columns_and_limits():
    profile = SnrProfile.normalized_linear(1.0)
    deltas = np.linspace(0.1, 10.0, 100)
    table = variance_curve_vs_delta(profile, deltas, [2, 7, "limit"])
    assert list(table.columns) == ["delta", "n=2", "n=7", "limit"]
    assert_allclose(table["delta"], deltas)
    near_two = np.abs(table["n=2"] - table["limit"])
    near_seven = np.abs(table["n=7"] - table["limit"])
    assert np.all(near_seven < near_two)

    tiny = variance_curve_vs_delta(profile, [1e-6], [7])
    taus = profile.tau(np.arange(8) / 7)
    assert tiny["n=7"].iloc[0] == pytest.approx(1.0 / np.sum(taus**2), rel=1e-12)


def test_curve_vs_delta_parallel_matches_sequential():
    deltas = np.linspace(0.01, 10.0, 50)
    sequential = variance_curve_vs_delta(RAMP, deltas, [2, 7, "limit"])
    parallel = variance_curve_vs_delta(RAMP, deltas, [2, 7, "limit"], workers=4)
    pd.testing.assert_frame_equal(sequential, parallel)


def test_curve_vs_delta_validation():
    with pytest.raises(ValidationError):
        variance_curve_vs_delta(RAMP, [0.0, 1.0], [2])
    with pytest.raises(ValidationError):
        variance_curve_vs_delta(RAMP, [1.0], [])
    with pytest.raises(ValidationError):
        variance_curve_vs_delta(RAMP, [1.0], [0])


def test_uncorrelated_variance_falls_as_inverse_count():
    table = variance_curve_vs_n(FLAT, 0.0, np.arange(1, 51))
    assert list(table.columns) == ["n", "delta=0"]
    assert_allclose(table["delta=0"], 1.0 / (table["n"] + 1), rtol=1e-15)


def test_correlated_variance_approaches_limit_from_above():
    profile = SnrProfile.normalized_linear(1.0)
    table = variance_curve_vs_n(profile, 1.0, np.arange(5, 201))
    limit = limiting_variance(profile, 1.0)
    values = table["delta=1"].to_numpy()
    assert np.all(values > limit)
    assert np.all(np.diff(values) < 0)
    assert values[-1] == pytest.approx(limit, rel=1e-4)


def test_correlated_variance_has_no_inverse_n_term():
    profile = SnrProfile.normalized_linear(1.0)

    def step(n):
        return abs(variance_at(profile, 2 * n, 1.0) - variance_at(profile, n, 1.0)) * n**2

    reference = step(8)
    for n in (16, 32, 64):
        assert step(n) <= 1.5 * reference


def test_short_correlation_length_saturates():
    profile = SnrProfile.normalized_linear(1.0)
    assert variance_at(profile, 1, 0.2) > variance_at(profile, 5, 0.2)
    assert abs(variance_at(profile, 100, 0.2) - variance_at(profile, 50, 0.2)) / variance_at(profile, 50, 0.2) < 1e-3


@pytest.mark.parametrize("delta", [0.5, 1.0])
def test_curve_vs_n_flattens(delta):
    profile = SnrProfile.normalized_linear(1.0)
    n_values = np.arange(1, 201)
    values = variance_curve_vs_n(profile, [0.0, delta], n_values)[f"delta={delta:g}"].to_numpy()
    limit = limiting_variance(profile, delta)
    start = int(2 / delta)
    for n in range(start + 1, 200):
        assert abs(values[n] - values[n - 1]) / values[n - 1] < 0.01
    for n in range(int(10 / delta), 201):
        assert abs(values[n - 1] - limit) / limit < 0.01


def test_curve_vs_n_parallel_matches_sequential():
    sequential = variance_curve_vs_n(RAMP, [0.0, 0.5, 2.0], np.arange(1, 40))
    parallel = variance_curve_vs_n(RAMP, [0.0, 0.5, 2.0], np.arange(1, 40), workers=3)
    pd.testing.assert_frame_equal(sequential, parallel)
