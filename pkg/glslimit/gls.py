"""
Обобщённый метод наименьших квадратов (BLUE).

Решение ведётся в собственном базисе Σ: Σ⁻¹ явно не формируется,
что устойчиво вблизи κ → 0, где Σ почти одноранговая.
Для двух измерений одного среднего даны замкнутые формулы,
которые служат независимыми эталонами.
"""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.sparse
from numpy.typing import ArrayLike

from . import constants
from .design import (
    DesignLike,
    DesignMatrix,
    Observation,
    ObservationLike,
    as_design,
    as_observation,
)
from .logging_config import get_logger
from .subspace import SpectralDecomposition, spectral_decompose
from .validators import (
    DegenerateLimitError,
    IllConditionedCovarianceError,
    RankDeficientDesignError,
    SingularCovarianceError,
    validate_correlation_coefficient,
    validate_count,
    validate_finite_array,
    validate_positive,
    validate_same_size,
)

logger = get_logger(__name__)

__all__ = [
    "DesignMatrix",
    "Observation",
    "ConditioningReport",
    "BlueResult",
    "chi_squared",
    "blue_fit",
    "estimator_covariance",
    "estimator_weights",
    "two_point_mean_variance",
    "two_point_weights",
    "two_point_limit_variance_rate",
    "two_point_full_correlation_estimate",
    "ar1_precision",
]


@dataclass(frozen=True, eq=False)
class ConditioningReport:
    covariance_min_eigenvalue: float
    covariance_max_eigenvalue: float
    covariance_ratio: float
    normal_min_eigenvalue: float
    normal_max_eigenvalue: float

    def to_dict(self) -> dict[str, float]:
        return {
            "covariance_min_eigenvalue": self.covariance_min_eigenvalue,
            "covariance_max_eigenvalue": self.covariance_max_eigenvalue,
            "covariance_ratio": self.covariance_ratio,
            "normal_min_eigenvalue": self.normal_min_eigenvalue,
            "normal_max_eigenvalue": self.normal_max_eigenvalue,
        }


@dataclass(frozen=True, eq=False)
class BlueResult:
    """β̂ = W·y, V = (XᵗΣ⁻¹X)⁻¹, χ² в оптимуме и диагностика."""

    beta_hat: np.ndarray
    covariance: np.ndarray
    weights: np.ndarray
    chi_squared: float
    condition: ConditioningReport

    def negative_weights(self) -> list[tuple[int, int]]:
        """Пары (параметр, измерение) с отрицательным весом."""
        rows, cols = np.nonzero(self.weights < 0)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "beta_hat": self.beta_hat.tolist(),
            "covariance": self.covariance.tolist(),
            "weights": self.weights.tolist(),
            "chi_squared": self.chi_squared,
            "condition": self.condition.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class _SpectralSolution:
    spectrum: SpectralDecomposition
    weights: np.ndarray
    covariance: np.ndarray
    condition: ConditioningReport


def _check_conditioning(spectrum: SpectralDecomposition, floor: float) -> None:
    ratio = spectrum.condition_ratio()
    if ratio < floor:
        logger.warning(f"Σ плохо обусловлена: λ_min/λ_max = {ratio:.3e} < {floor:.1e}")
        raise IllConditionedCovarianceError(ratio, floor)


def _spectral_solution(
    design: DesignMatrix,
    Sigma: ArrayLike,
    conditioning_floor: float,
    rank_rtol: float = constants.RANK_RTOL,
) -> _SpectralSolution:
    spectrum = spectral_decompose(Sigma)
    validate_same_size(spectrum.n, design.n, "covariance")
    if not design.full_rank:
        raise RankDeficientDesignError(design.rank, design.m)
    _check_conditioning(spectrum, conditioning_floor)

    Q = spectrum.eigenvectors
    scale = 1.0 / np.sqrt(spectrum.eigenvalues)
    whitened = (Q.T @ design.values) * scale[:, None]
    U, s, Vt = np.linalg.svd(whitened, full_matrices=False)
    if s[-1] <= rank_rtol * s[0]:
        raise RankDeficientDesignError(int(np.sum(s > rank_rtol * s[0])), design.m)

    # W = A⁺Λ^{-1/2}Qᵗ, где A = Λ^{-1/2}QᵗX
    pseudo_inverse = Vt.T @ (U.T / s[:, None])
    weights = (pseudo_inverse * scale[None, :]) @ Q.T
    covariance = (Vt.T / s**2) @ Vt
    covariance = (covariance + covariance.T) / 2.0

    normal = s**2
    condition = ConditioningReport(
        covariance_min_eigenvalue=float(spectrum.eigenvalues[-1]),
        covariance_max_eigenvalue=float(spectrum.eigenvalues[0]),
        covariance_ratio=spectrum.condition_ratio(),
        normal_min_eigenvalue=float(normal.min()),
        normal_max_eigenvalue=float(normal.max()),
    )
    return _SpectralSolution(spectrum=spectrum, weights=weights, covariance=covariance, condition=condition)


def _quadratic_form(spectrum: SpectralDecomposition, residual: np.ndarray) -> float:
    projected = spectrum.eigenvectors.T @ residual
    return float(np.sum(projected**2 / spectrum.eigenvalues))


def chi_squared(
    y: ObservationLike,
    X: DesignLike,
    beta: ArrayLike,
    Sigma: ArrayLike,
    conditioning_floor: float = constants.CONDITIONING_FLOOR,
) -> float:
    """
    χ²(β) = (Y − Xβ)ᵗΣ⁻¹(Y − Xβ) для произвольного β.

    Raises:
        SingularCovarianceError: λ_min/λ_max ниже порога
        DimensionMismatchError: Размеры y, X, β, Σ не согласованы
    """
    observation = as_observation(y)
    design = as_design(X)
    coefficients = validate_finite_array(beta, "beta", ndim=1)
    validate_same_size(design.n, observation.n, "y")
    validate_same_size(design.m, coefficients.shape[0], "beta")
    spectrum = spectral_decompose(Sigma)
    validate_same_size(design.n, spectrum.n, "covariance")
    ratio = spectrum.condition_ratio()
    if ratio < conditioning_floor:
        raise SingularCovarianceError(float(spectrum.eigenvalues[-1]), ratio, conditioning_floor)
    return _quadratic_form(spectrum, observation.y - design.values @ coefficients)


def blue_fit(
    y: ObservationLike,
    X: DesignLike,
    Sigma: ArrayLike,
    conditioning_floor: float = constants.CONDITIONING_FLOOR,
    rank_rtol: float = constants.RANK_RTOL,
) -> BlueResult:
    """
    Решение нормальных уравнений (XᵗΣ⁻¹X)β̂ = XᵗΣ⁻¹Y.

    Args:
        y: Наблюдения длины n
        X: Матрица плана n × m полного ранга
        Sigma: Ковариация шума n × n
        conditioning_floor: Минимально допустимое λ_min/λ_max
        rank_rtol: Относительный порог численного ранга X

    Returns:
        BlueResult с β̂, V, W и χ²(β̂)

    Raises:
        RankDeficientDesignError: X не полного ранга
        IllConditionedCovarianceError: Σ слишком близка к вырожденной;
            предельное поведение даёт limit_variance_prediction
    """
    observation = as_observation(y)
    design = as_design(X, rank_rtol)
    validate_same_size(design.n, observation.n, "y")
    solution = _spectral_solution(design, Sigma, conditioning_floor, rank_rtol)

    beta_hat = solution.weights @ observation.y
    chi2 = _quadratic_form(solution.spectrum, observation.y - design.values @ beta_hat)
    logger.debug(f"BLUE: n = {design.n}, m = {design.m}, χ² = {chi2:.6g}")
    return BlueResult(
        beta_hat=beta_hat,
        covariance=solution.covariance,
        weights=solution.weights,
        chi_squared=chi2,
        condition=solution.condition,
    )


def estimator_covariance(
    X: DesignLike,
    Sigma: ArrayLike,
    conditioning_floor: float = constants.CONDITIONING_FLOOR,
    rank_rtol: float = constants.RANK_RTOL,
) -> np.ndarray:
    """V = (XᵗΣ⁻¹X)⁻¹, не зависит от y."""
    return _spectral_solution(as_design(X, rank_rtol), Sigma, conditioning_floor, rank_rtol).covariance


def estimator_weights(
    X: DesignLike,
    Sigma: ArrayLike,
    conditioning_floor: float = constants.CONDITIONING_FLOOR,
    rank_rtol: float = constants.RANK_RTOL,
) -> np.ndarray:
    """Матрица W (m × n), β̂ = W·y, W·X = I."""
    return _spectral_solution(as_design(X, rank_rtol), Sigma, conditioning_floor, rank_rtol).weights


def _is_tie(sigma1: float, sigma2: float, tie_gap: float) -> bool:
    return abs(sigma1 - sigma2) <= tie_gap * max(sigma1, sigma2)


def two_point_mean_variance(
    sigma1: float,
    sigma2: float,
    rho: float,
    tie_gap: float = constants.TIE_GAP,
) -> float:
    """
    Дисперсия оценки среднего по двум измерениям.

    V = (1 − ρ²)/((1 − ρ)(τ₁² + τ₂²) + ρ(τ₁ − τ₂)²), τᵢ = 1/σᵢ.
    На границе |ρ| = 1 берётся аналитический предел: 0, кроме
    ρ = 1 при σ₁ = σ₂, где V = σ₁².
    """
    sigma1 = validate_positive(sigma1, "sigma1")
    sigma2 = validate_positive(sigma2, "sigma2")
    rho = validate_correlation_coefficient(rho, closed=True)
    if rho == 1.0:
        return sigma1**2 if _is_tie(sigma1, sigma2, tie_gap) else 0.0
    if rho == -1.0:
        return 0.0
    tau1, tau2 = 1.0 / sigma1, 1.0 / sigma2
    denominator = (1.0 - rho) * (tau1**2 + tau2**2) + rho * (tau1 - tau2) ** 2
    return (1.0 - rho) * (1.0 + rho) / denominator


def two_point_weights(
    sigma1: float,
    sigma2: float,
    rho: float,
    tie_gap: float = constants.TIE_GAP,
) -> tuple[float, float]:
    """
    Веса (w₁, w₂) оценки μ̂ = w₁y₁ + w₂y₂.

    При σ₁ > σ₂ вес w₁ отрицателен, если ρ > σ₂/σ₁.
    """
    sigma1 = validate_positive(sigma1, "sigma1")
    sigma2 = validate_positive(sigma2, "sigma2")
    rho = validate_correlation_coefficient(rho, closed=True)
    tau1, tau2 = 1.0 / sigma1, 1.0 / sigma2
    if rho == 1.0:
        if _is_tie(sigma1, sigma2, tie_gap):
            return 0.5, 0.5
        return tau1 / (tau1 - tau2), -tau2 / (tau1 - tau2)
    denominator = (1.0 - rho) * (tau1**2 + tau2**2) + rho * (tau1 - tau2) ** 2
    w1 = (tau1**2 - rho * tau1 * tau2) / denominator
    w2 = (tau2**2 - rho * tau1 * tau2) / denominator
    return w1, w2


def two_point_limit_variance_rate(
    sigma1: float,
    sigma2: float,
    rho: float,
    tie_gap: float = constants.TIE_GAP,
) -> float:
    """Асимптотика V → 2(1 − ρ)/(τ₁ − τ₂)² при ρ → 1, σ₁ ≠ σ₂."""
    sigma1 = validate_positive(sigma1, "sigma1")
    sigma2 = validate_positive(sigma2, "sigma2")
    rho = validate_correlation_coefficient(rho, closed=True)
    if _is_tie(sigma1, sigma2, tie_gap):
        raise DegenerateLimitError("При σ₁ = σ₂ дисперсия не стремится к нулю.")
    return 2.0 * (1.0 - rho) / (1.0 / sigma1 - 1.0 / sigma2) ** 2


def two_point_full_correlation_estimate(
    y1: float,
    y2: float,
    sigma1: float,
    sigma2: float,
    tie_gap: float = constants.TIE_GAP,
) -> float:
    """
    Предельная оценка при ρ → 1: μ̂ = (τ₁y₁ − τ₂y₂)/(τ₁ − τ₂).

    Шум y₁ = μ + σ₁α, y₂ = μ + σ₂α исключается точно для любого α.

    Raises:
        DegenerateLimitError: σ₁ = σ₂ (измерения совпадают, предел вырожден)
    """
    sigma1 = validate_positive(sigma1, "sigma1")
    sigma2 = validate_positive(sigma2, "sigma2")
    if not (math.isfinite(y1) and math.isfinite(y2)):
        raise DegenerateLimitError("Измерения должны быть конечными.")
    if _is_tie(sigma1, sigma2, tie_gap):
        raise DegenerateLimitError(
            f"σ₁ = {sigma1:g} и σ₂ = {sigma2:g} совпадают в пределах {tie_gap:.0e}: "
            "второе измерение не несёт новой информации."
        )
    tau1, tau2 = 1.0 / sigma1, 1.0 / sigma2
    return (tau1 * y1 - tau2 * y2) / (tau1 - tau2)


def ar1_precision(n_points: int, rho: float) -> scipy.sparse.csr_matrix:
    """
    Трёхдиагональная R⁻¹ для AR(1).

    R⁻¹ = 1/(1 − ρ²)·tridiag(−ρ; 1, 1 + ρ², …, 1 + ρ², 1; −ρ).

    Raises:
        ValidationError: |ρ| ≥ 1, обратной не существует
    """
    n_points = validate_count(n_points, "n_points")
    rho = validate_correlation_coefficient(rho)
    if n_points == 1:
        return scipy.sparse.identity(1, format="csr")
    factor = 1.0 / ((1.0 - rho) * (1.0 + rho))
    main = np.full(n_points, (1.0 + rho**2) * factor)
    main[0] = main[-1] = factor
    off = np.full(n_points - 1, -rho * factor)
    return scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csr")
