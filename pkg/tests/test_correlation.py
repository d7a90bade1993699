import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from glslimit.correlation import (
    CorrelationMatrix,
    CovarianceModel,
    SignVector,
    ar1_correlation,
    assemble_covariance,
    block_correlation,
    decompose_covariance,
    exponential_correlation,
    kappa,
    rank_one_limit,
    sign_vector,
)
from glslimit.validators import (
    DimensionMismatchError,
    IndeterminateSignError,
    NotPositiveSemidefiniteError,
    SignInconsistencyError,
    ValidationError,
)


def test_ar1_entries():
    assert_array_equal(ar1_correlation(2, 0.5).values, [[1.0, 0.5], [0.5, 1.0]])
    assert_array_equal(ar1_correlation(3, 0.0).values, np.eye(3))
    assert ar1_correlation(3, 0.9).values[0, 2] == pytest.approx(0.81, abs=1e-15)


def test_ar1_rejects_boundary():
    with pytest.raises(ValidationError):
        ar1_correlation(3, 1.0)


def test_exponential_matches_ar1_on_uniform_grid():
    n, delta = 6, 0.7
    locations = np.arange(n + 1) / n
    R = exponential_correlation(locations, delta)
    expected = ar1_correlation(n + 1, math.exp(-1.0 / (delta * n)))
    assert_allclose(R.values, expected.values, rtol=1e-14)


def test_exponential_examples():
    far = exponential_correlation([0.0, 0.5, 1.0], 1e9)
    assert np.all(np.abs(far.values - 1.0) < 1e-8)
    near = exponential_correlation([0.0, 1.0], 1.0)
    assert near.values[0, 1] == pytest.approx(0.367879441171442, rel=1e-14)
    with pytest.raises(ValidationError):
        exponential_correlation([0.0, 1.0], 0.0)


def test_rank_one_limit():
    e = SignVector.from_sequence([1, -1, 1])
    R = rank_one_limit(e)
    assert_array_equal(R.values, np.outer(e.entries, e.entries))
    eigenvalues = np.linalg.eigvalsh(R.values)
    assert eigenvalues[-1] == pytest.approx(3.0, abs=1e-10 * 3)
    assert np.all(np.abs(eigenvalues[:-1]) < 1e-10 * 3)
    assert kappa(R) == 0.0


def test_alternating_signs_match_negative_ar1():
    R = ar1_correlation(3, -0.99)
    assert_array_equal(sign_vector(R).entries, [1.0, -1.0, 1.0])


def test_sign_vector_recovers_rank_one_signs():
    e = SignVector.from_sequence([1, 1, -1, 1])
    assert_array_equal(sign_vector(rank_one_limit(e)).entries, e.entries)


def test_sign_vector_positive_matrix():
    R = CorrelationMatrix.from_array([[1.0, 0.9, 0.8], [0.9, 1.0, 0.85], [0.8, 0.85, 1.0]])
    assert_array_equal(sign_vector(R).entries, [1.0, 1.0, 1.0])


def test_sign_inconsistency():
    # При пороге 0.5 такая матрица не была бы неотрицательно определённой
    R = CorrelationMatrix.from_array([[1.0, 0.5, 0.5], [0.5, 1.0, -0.4], [0.5, -0.4, 1.0]])
    with pytest.raises(SignInconsistencyError) as info:
        sign_vector(R, sign_threshold=0.2)
    assert info.value.pair == (1, 2)


def test_indeterminate_sign():
    with pytest.raises(IndeterminateSignError) as info:
        sign_vector(ar1_correlation(3, 0.6))
    assert info.value.pair == (0, 2)


def test_kappa():
    assert kappa(ar1_correlation(3, 0.9)) == pytest.approx(0.19, abs=1e-15)
    assert kappa(CorrelationMatrix.from_array(np.eye(2))) == 1.0
    assert kappa(CorrelationMatrix.from_array([[1.0]])) == 0.0


def test_kappa_equals_power_law():
    for n, rho in ((4, 0.7), (5, -0.95)):
        assert kappa(ar1_correlation(n, rho)) == pytest.approx(1 - abs(rho) ** (n - 1), abs=1e-15)


def test_correlation_validation():
    with pytest.raises(ValidationError):
        CorrelationMatrix.from_array([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ValidationError):
        CorrelationMatrix.from_array([[1.0, 0.5], [0.5, 0.9]])
    with pytest.raises(ValidationError):
        CorrelationMatrix.from_array([[1.0, 1.5], [1.5, 1.0]])
    with pytest.raises(NotPositiveSemidefiniteError):
        CorrelationMatrix.from_array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])


def test_values_are_read_only():
    R = ar1_correlation(3, 0.5)
    with pytest.raises(ValueError):
        R.values[0, 1] = 0.0


def test_sign_vector_requires_unit_entries():
    with pytest.raises(ValidationError):
        SignVector.from_sequence([1.0, 0.5])


def test_block_composition():
    identity = block_correlation([CorrelationMatrix.from_array([[1.0]]), CorrelationMatrix.from_array([[1.0]])])
    assert_array_equal(identity.values, np.eye(2))

    R = block_correlation([ar1_correlation(2, 0.3), rank_one_limit(SignVector.from_sequence([1, 1, 1]))])
    assert R.n == 5
    assert R.rank() == 3
    assert_array_equal(R.values[:2, 2:], 0.0)

    single = ar1_correlation(3, 0.2)
    assert block_correlation([single]) is single
    with pytest.raises(ValidationError):
        block_correlation([])


def test_assemble_covariance():
    model = CovarianceModel(deviations=np.array([1.0, 2.0]), correlation=ar1_correlation(2, 0.5))
    assert_array_equal(assemble_covariance(model), [[1.0, 1.0], [1.0, 4.0]])

    ones = CovarianceModel(
        deviations=np.ones(3), correlation=rank_one_limit(SignVector.from_sequence([1, 1, 1]))
    )
    assert_array_equal(assemble_covariance(ones), np.ones((3, 3)))


def test_covariance_round_trip():
    s = np.array([1.0, 0.5, 2.0])
    R = ar1_correlation(3, 0.3)
    sigmas, recovered = decompose_covariance(assemble_covariance(CovarianceModel(deviations=s, correlation=R)))
    assert_allclose(sigmas, s, rtol=1e-14)
    assert_allclose(recovered.values, R.values, rtol=1e-14)


def test_covariance_model_validation():
    with pytest.raises(DimensionMismatchError):
        CovarianceModel(deviations=np.ones(3), correlation=ar1_correlation(2, 0.1))
    with pytest.raises(ValidationError):
        CovarianceModel(deviations=np.array([1.0, -1.0]), correlation=ar1_correlation(2, 0.1))
    with pytest.raises(ValidationError):
        decompose_covariance([[0.0, 0.0], [0.0, 1.0]])
