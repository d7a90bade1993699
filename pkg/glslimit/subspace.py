"""
Спектральный базис Σ и подпространство без шума.

Преобразование Z = QᵗY = (QᵗX)β + Λ^{1/2}ξ разделяет наблюдения на
шумные (большие λⱼ) и точные (λⱼ → 0 в пределе полной корреляции).
Если v₁ не лежит в пространстве столбцов X, точные уравнения
Zⱼ = vⱼᵗXβ, j ≥ 2, определяют β однозначно и полная дисперсия
оценки стремится к нулю.
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from . import constants
from .correlation import SignVector
from .design import DesignLike, ObservationLike, as_design, as_observation, numerical_rank
from .logging_config import get_logger
from .validators import (
    NotInColumnSpaceError,
    NotPositiveSemidefiniteError,
    NumericalError,
    RankDeficientDesignError,
    SingularCovarianceError,
    UnderdeterminedLimitError,
    ValidationError,
    validate_count,
    validate_deviations,
    validate_finite_array,
    validate_positive,
    validate_same_size,
    validate_square,
)

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """λ₁ ≥ … ≥ λₙ ≥ 0 и ортонормированные столбцы Q = [v₁, …, vₙ]."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clamped: bool

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T

    def condition_ratio(self) -> float:
        top = self.eigenvalues[0]
        return float(self.eigenvalues[-1] / top) if top > 0 else 0.0


@dataclass(frozen=True, eq=False)
class Membership:
    member: bool
    residual: float


@dataclass(frozen=True, eq=False)
class TransformedSystem:
    """Система в собственном базисе Σ: Z, X̃ и Λ."""

    z: np.ndarray
    x_tilde: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def recover_observation(self) -> np.ndarray:
        return self.eigenvectors @ self.z


@dataclass(frozen=True, eq=False)
class ReducedDesign:
    matrix: np.ndarray
    rank: int


@dataclass(frozen=True, eq=False)
class LimitReport:
    """Структурный прогноз поведения оценки при κ → 0."""

    v1: np.ndarray
    v1_in_column_space: bool
    v1_residual: float
    exact_dimension: int
    noisy_dimension: int
    predicted_total_variance: Optional[float]
    reduced_rank: int
    covariance_limit_rank: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "v1": self.v1.tolist(),
            "v1_in_column_space": self.v1_in_column_space,
            "v1_residual": self.v1_residual,
            "exact_dimension": self.exact_dimension,
            "noisy_dimension": self.noisy_dimension,
            "predicted_total_variance": self.predicted_total_variance,
            "reduced_rank": self.reduced_rank,
            "covariance_limit_rank": self.covariance_limit_rank,
        }


def spectral_decompose(
    Sigma: ArrayLike,
    clamp_rtol: float = constants.CLAMP_RTOL,
    symmetry_rtol: float = constants.SYMMETRY_RTOL,
) -> SpectralDecomposition:
    """
    Собственное разложение симметричной Σ по убыванию λ.

    Отрицательные λ в пределах −clamp_rtol·λ₁ (ошибки округления
    у почти вырожденных Σ) обнуляются с флагом clamped. Знак каждого
    собственного вектора фиксирован: наибольшая по модулю компонента > 0.

    Raises:
        ValidationError: Несимметричность сверх symmetry_rtol
        NotPositiveSemidefiniteError: λ ниже −clamp_rtol·λ₁
    """
    matrix = validate_square(Sigma, "covariance")
    scale = float(np.max(np.abs(matrix)))
    if np.max(np.abs(matrix - matrix.T)) > symmetry_rtol * scale:
        raise ValidationError("Ковариационная матрица несимметрична.")
    matrix = (matrix + matrix.T) / 2.0

    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    eigenvalues = eigenvalues[::-1].copy()
    eigenvectors = eigenvectors[:, ::-1].copy()

    top = max(float(eigenvalues[0]), 0.0)
    if eigenvalues[-1] < -clamp_rtol * top:
        raise NotPositiveSemidefiniteError(float(eigenvalues[-1]), clamp_rtol)
    negative = eigenvalues < 0
    clamped = bool(np.any(negative))
    if clamped:
        logger.debug(f"Обнулено {int(np.sum(negative))} отрицательных собственных значений")
        eigenvalues[negative] = 0.0

    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(eigenvectors.shape[1])])
    eigenvectors *= np.where(signs == 0, 1.0, signs)

    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return SpectralDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors, clamped=clamped)


def limiting_v1(sigmas: ArrayLike, e: SignVector) -> np.ndarray:
    """Аналитический v₁ предельной Σ: eⱼσⱼ/√(Σσⱼ²)."""
    s = validate_deviations(sigmas)
    validate_same_size(s.shape[0], e.n, "signs")
    signed = e.entries * s
    return signed / np.linalg.norm(signed)


def v1_membership(
    X: DesignLike,
    v1: ArrayLike,
    tol: float = constants.MEMBERSHIP_TOL,
    rank_rtol: float = constants.RANK_RTOL,
) -> Membership:
    """
    Лежит ли v₁ в пространстве столбцов X.

    Невязка проекции сообщается всегда; принадлежность означает невязку ≤ tol.

    Raises:
        ValidationError: tol ≤ 0 или ‖v₁‖ ≠ 1
    """
    tol = validate_positive(tol, "tol")
    design = as_design(X, rank_rtol)
    v = validate_finite_array(v1, "v1", ndim=1)
    validate_same_size(design.n, v.shape[0], "v1")
    if abs(np.linalg.norm(v) - 1.0) > constants.UNIT_NORM_TOL:
        raise ValidationError("v1 должен иметь единичную норму.")

    basis = scipy.linalg.orth(design.values, rcond=rank_rtol)
    residual = float(np.linalg.norm(v - basis @ (basis.T @ v)))
    return Membership(member=residual <= tol, residual=residual)


def transform_to_eigenbasis(y: ObservationLike, X: DesignLike, spectrum: SpectralDecomposition) -> TransformedSystem:
    """Z = Qᵗy, X̃ = QᵗX; Λ возвращается вместе с ними."""
    observation = as_observation(y)
    design = as_design(X)
    validate_same_size(spectrum.n, observation.n, "y")
    validate_same_size(spectrum.n, design.n, "design")
    Q = spectrum.eigenvectors
    return TransformedSystem(
        z=Q.T @ observation.y,
        x_tilde=Q.T @ design.values,
        eigenvalues=spectrum.eigenvalues,
        eigenvectors=Q,
    )


def transformed_estimate(
    system: TransformedSystem,
    drop: int = 0,
    conditioning_floor: float = constants.CONDITIONING_FLOOR,
) -> tuple[np.ndarray, np.ndarray]:
    """
    BLUE по строкам j > drop преобразованной системы.

    β̂ = (X̃₋ₖᵗΛ₋ₖ⁻¹X̃₋ₖ)⁻¹X̃₋ₖᵗΛ₋ₖ⁻¹Z₋ₖ и его ковариация; при drop = 0
    совпадает с blue_fit.

    Raises:
        SingularCovarianceError: Оставшиеся λ ниже порога обусловленности
        RankDeficientDesignError: X̃₋ₖ не полного ранга
    """
    n, m = system.x_tilde.shape
    drop = validate_count(drop, "drop", minimum=0)
    if drop >= n:
        raise ValidationError(f"drop должно быть < n = {n}.")
    lam = system.eigenvalues[drop:]
    ratio = float(lam[-1] / lam[0]) if lam[0] > 0 else 0.0
    if ratio < conditioning_floor:
        raise SingularCovarianceError(float(lam[-1]), ratio, conditioning_floor)

    scale = 1.0 / np.sqrt(lam)
    A = system.x_tilde[drop:] * scale[:, None]
    b = system.z[drop:] * scale
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > constants.RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < m:
        raise RankDeficientDesignError(rank, m)
    beta = Vt.T @ ((U.T @ b) / s)
    covariance = (Vt.T / s**2) @ Vt
    return beta, (covariance + covariance.T) / 2.0


def reduced_design(
    X: DesignLike,
    spectrum: SpectralDecomposition,
    drop: int,
    rank_rtol: float = constants.RANK_RTOL,
) -> ReducedDesign:
    """
    X̃₋ₖ = [v_{k+1}, …, vₙ]ᵗX и его численный ранг.

    Ранг считается относительно наибольшего сингулярного числа самой X
    (Q ортогональна, масштаб сохраняется): строки, ушедшие в ноль
    в пределе, не должны сами задавать масштаб.
    """
    design = as_design(X, rank_rtol)
    validate_same_size(spectrum.n, design.n, "design")
    drop = validate_count(drop, "drop", minimum=0)
    if drop >= design.n:
        raise ValidationError(f"drop должно быть < n = {design.n}.")
    matrix = spectrum.eigenvectors[:, drop:].T @ design.values
    rank = numerical_rank(matrix, design.largest_singular_value, rank_rtol)
    return ReducedDesign(matrix=matrix, rank=rank)


def reparametrize(
    X: DesignLike,
    v1: ArrayLike,
    tol: float = constants.MEMBERSHIP_TOL,
    rank_rtol: float = constants.RANK_RTOL,
) -> np.ndarray:
    """
    Обратимая W (m × m): первый столбец XW равен v₁, остальные ⟂ v₁.

    Тогда γ = W⁻¹β, γ₁ остаётся единственной шумной комбинация параметров.

    Raises:
        NotInColumnSpaceError: v₁ вне пространства столбцов X
    """
    design = as_design(X, rank_rtol)
    membership = v1_membership(design, v1, tol, rank_rtol)
    if not membership.member:
        raise NotInColumnSpaceError(membership.residual, tol)
    if not design.full_rank:
        raise RankDeficientDesignError(design.rank, design.m)

    v = np.asarray(v1, dtype=float)
    first, *_ = np.linalg.lstsq(design.values, v, rcond=None)
    # Остальные столбцы: ядро строки v₁ᵗX, т.е. (Xw)ᵗv₁ = 0
    others = scipy.linalg.null_space((v @ design.values)[None, :])
    return np.column_stack([first, others])


def noise_free_solve(
    system: TransformedSystem,
    noisy_rank: int = 1,
    rank_rtol: float = constants.RANK_RTOL,
) -> np.ndarray:
    """
    Точное решение по уравнениям без шума Zⱼ = vⱼᵗXβ, j > noisy_rank.

    Raises:
        RankDeficientDesignError: Точных уравнений недостаточно для всех β
    """
    n, m = system.x_tilde.shape
    noisy_rank = validate_count(noisy_rank, "noisy_rank", minimum=0)
    if noisy_rank >= n:
        raise ValidationError(f"noisy_rank должно быть < n = {n}.")
    free = system.x_tilde[noisy_rank:]
    scale = float(np.linalg.norm(system.x_tilde, 2))
    rank = numerical_rank(free, scale, rank_rtol)
    if rank < m:
        raise RankDeficientDesignError(rank, m)
    beta, *_ = np.linalg.lstsq(free, system.z[noisy_rank:], rcond=None)
    return beta


def noise_free_count(spectrum: SpectralDecomposition, clamp_rtol: float = constants.MC_CLAMP_RTOL) -> int:
    """Число собственных значений не выше clamp_rtol·λ₁."""
    top = float(spectrum.eigenvalues[0])
    return int(np.sum(spectrum.eigenvalues <= clamp_rtol * top))


def limiting_covariance(
    X: DesignLike,
    Sigma_limit: ArrayLike,
    clamp_rtol: float = constants.MC_CLAMP_RTOL,
    rank_rtol: float = constants.RANK_RTOL,
) -> np.ndarray:
    """
    Ковариация BLUE в самом пределе, где Σ вырождена.

    Точные строки QᵗX фиксируют свою строчную оболочку β, остальные
    направления P оцениваются по шумным строкам:
    V₀ = P (PᵗX̃ₙᵗΛₙ⁻¹X̃ₙP)⁻¹ Pᵗ. Число нулевых собственных значений V₀
    равно рангу точных строк.

    Raises:
        NumericalError: Шумных строк не хватает для оставшихся направлений
    """
    design = as_design(X, rank_rtol)
    spectrum = spectral_decompose(Sigma_limit, clamp_rtol=max(clamp_rtol, constants.CLAMP_RTOL))
    validate_same_size(spectrum.n, design.n, "design")
    m = design.m

    zero_count = noise_free_count(spectrum, clamp_rtol)
    noisy = spectrum.n - zero_count
    x_tilde = spectrum.eigenvectors.T @ design.values
    free = x_tilde[noisy:]
    if free.shape[0] == 0:
        exact_rank = 0
        directions = np.eye(m)
    else:
        _, s, Vt = np.linalg.svd(free)
        exact_rank = int(np.sum(s > rank_rtol * design.largest_singular_value))
        directions = Vt[exact_rank:].T
    logger.debug(f"Предельная ковариация: r′ = {noisy}, точных комбинаций {exact_rank}")

    if directions.shape[1] == 0:
        return np.zeros((m, m))

    if noisy < directions.shape[1]:
        raise NumericalError(
            "Шумных строк меньше, чем неопределённых направлений β: "
            "предельная дисперсия бесконечна."
        )
    A = (x_tilde[:noisy] @ directions) / np.sqrt(spectrum.eigenvalues[:noisy])[:, None]
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] <= rank_rtol * s[0]:
        raise NumericalError(
            "Шумные строки не определяют оставшиеся направления β: "
            "предельная дисперсия бесконечна."
        )
    reduced = (Vt.T / s**2) @ Vt
    covariance = directions @ reduced @ directions.T
    return (covariance + covariance.T) / 2.0


def limit_variance_prediction(
    X: DesignLike,
    sigmas: ArrayLike,
    e: SignVector,
    covariance_limit_rank: Optional[int] = None,
    membership_tol: float = constants.MEMBERSHIP_TOL,
    rank_rtol: float = constants.RANK_RTOL,
) -> LimitReport:
    """
    Прогноз предельного поведения BLUE при κ → 0.

    v₁ строится аналитически из (σ, e). Если v₁ вне пространства
    столбцов X, все m комбинаций определяются точно и полная дисперсия
    стремится к нулю. Иначе одна комбинация (γ₁) остаётся шумной
    с дисперсией Σσⱼ². Если задан ранг предельной Σ (r′), точно
    определяются min(m, n − r′) комбинаций.

    Args:
        X: Матрица плана n × m, n > m, полного ранга
        sigmas: Отклонения σⱼ
        e: Согласованные знаки предела R = eeᵗ
        covariance_limit_rank: r′ для блочных пределов, иначе None

    Raises:
        UnderdeterminedLimitError: n ≤ m
        RankDeficientDesignError: X не полного ранга
    """
    design = as_design(X, rank_rtol)
    n, m = design.n, design.m
    if n <= m:
        raise UnderdeterminedLimitError(f"Нужно n > m, получено n = {n}, m = {m}.")
    if not design.full_rank:
        raise RankDeficientDesignError(design.rank, m)
    s = validate_deviations(sigmas)
    validate_same_size(n, s.shape[0], "sigma")

    v1 = limiting_v1(s, e)
    membership = v1_membership(design, v1, membership_tol, rank_rtol)
    complement = scipy.linalg.null_space(v1[None, :])
    reduced_rank = numerical_rank(complement.T @ design.values, design.largest_singular_value, rank_rtol)

    total = float(np.sum(s**2))
    if covariance_limit_rank is None:
        exact = m - 1 if membership.member else m
        if exact == m:
            predicted: Optional[float] = 0.0
        else:
            predicted = total
    else:
        r_prime = validate_count(covariance_limit_rank, "covariance_limit_rank")
        if r_prime >= n:
            raise ValidationError(f"covariance_limit_rank должно быть < n = {n}.")
        exact = min(m, n - r_prime)
        # Вне одноранговой эвристики величина шумной дисперсии не определена
        predicted = 0.0 if exact == m else None

    logger.debug(
        f"Прогноз предела: v₁ в пространстве столбцов = {membership.member}, "
        f"точных комбинаций {exact} из {m}"
    )
    return LimitReport(
        v1=v1,
        v1_in_column_space=membership.member,
        v1_residual=membership.residual,
        exact_dimension=exact,
        noisy_dimension=m - exact,
        predicted_total_variance=predicted,
        reduced_rank=reduced_rank,
        covariance_limit_rank=covariance_limit_rank,
    )
