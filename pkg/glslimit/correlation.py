"""
Корреляционные и ковариационные матрицы.

AR(1) ϱᵢⱼ = ρ^|i−j|, экспоненциальное ядро exp(−|xᵢ − xⱼ|/δ),
предел полной корреляции R = eeᵗ и блочные композиции.
Все значения неизменяемы после построения.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from . import constants
from .logging_config import get_logger
from .validators import (
    IndeterminateSignError,
    NotPositiveSemidefiniteError,
    SignInconsistencyError,
    ValidationError,
    validate_correlation_coefficient,
    validate_count,
    validate_deviations,
    validate_finite_array,
    validate_positive,
    validate_same_size,
    validate_square,
)

logger = get_logger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Симметричная матрица с единичной диагональю и метаданными проверки."""

    values: np.ndarray
    min_eigenvalue: float
    max_eigenvalue: float

    @classmethod
    def from_array(cls, values: ArrayLike, psd_floor: float = constants.PSD_FLOOR) -> "CorrelationMatrix":
        """
        Проверяет и фиксирует матрицу коэффициентов корреляции.

        Args:
            values: Квадратная матрица ϱᵢⱼ
            psd_floor: Допуск на отрицательные собственные значения
                относительно λ_max

        Raises:
            ValidationError: Несимметричность, диагональ ≠ 1, |ϱᵢⱼ| > 1
            NotPositiveSemidefiniteError: λ_min < −psd_floor·λ_max
        """
        matrix = validate_square(values, "correlation")
        if not np.array_equal(matrix, matrix.T):
            raise ValidationError("Корреляционная матрица несимметрична.")
        diagonal = np.diag(matrix)
        if np.any(np.abs(diagonal - 1.0) > constants.DIAGONAL_TOL):
            raise ValidationError("Диагональ корреляционной матрицы должна состоять из единиц.")
        if np.any(np.abs(matrix) > 1.0 + constants.ENTRY_TOL):
            raise ValidationError("Коэффициенты корреляции должны лежать в [−1, 1].")

        matrix = np.clip(matrix, -1.0, 1.0)
        np.fill_diagonal(matrix, 1.0)

        eigenvalues = np.linalg.eigvalsh(matrix)
        lam_min, lam_max = float(eigenvalues[0]), float(eigenvalues[-1])
        if lam_min < -psd_floor * lam_max:
            raise NotPositiveSemidefiniteError(lam_min, psd_floor)
        return cls(values=_frozen(matrix), min_eigenvalue=lam_min, max_eigenvalue=lam_max)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def rank(self, rtol: float = constants.RANK_RTOL) -> int:
        return int(np.linalg.matrix_rank(self.values, tol=rtol * max(self.max_eigenvalue, 1.0)))


@dataclass(frozen=True, eq=False)
class SignVector:
    """Знаки eⱼ = ±1 предела R = eeᵗ."""

    entries: np.ndarray

    @classmethod
    def from_sequence(cls, signs: ArrayLike) -> "SignVector":
        array = validate_finite_array(signs, "signs", ndim=1)
        if not np.all(np.abs(array) == 1.0):
            raise ValidationError("Каждый знак должен быть ровно +1 или −1.")
        return cls(entries=_frozen(array))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Σ = SRS: отклонения σᵢ и корреляционная матрица."""

    deviations: np.ndarray
    correlation: CorrelationMatrix = field(repr=False)

    def __post_init__(self) -> None:
        deviations = validate_deviations(self.deviations, "sigma")
        validate_same_size(self.correlation.n, deviations.shape[0], "sigma")
        object.__setattr__(self, "deviations", _frozen(deviations))

    @property
    def n(self) -> int:
        return self.deviations.shape[0]


def ar1_correlation(n: int, rho: float) -> CorrelationMatrix:
    """AR(1): ϱᵢⱼ = ρ^|i−j|, |ρ| < 1."""
    n = validate_count(n, "n")
    rho = validate_correlation_coefficient(rho)
    first_row = np.power(rho, np.arange(n, dtype=float))
    return CorrelationMatrix.from_array(scipy.linalg.toeplitz(first_row))


def exponential_correlation(locations: ArrayLike, delta: float) -> CorrelationMatrix:
    """
    Экспоненциальное ядро ϱᵢⱼ = exp(−|xᵢ − xⱼ|/δ).

    Для равномерной сетки xᵢ = i/n совпадает с AR(1) при ρ = exp(−1/(δn)).

    Raises:
        ValidationError: δ ≤ 0 или нечисловые координаты
    """
    x = validate_finite_array(locations, "locations", ndim=1)
    delta = validate_positive(delta, "delta")
    distances = np.abs(x[:, None] - x[None, :])
    return CorrelationMatrix.from_array(np.exp(-distances / delta))


def rank_one_limit(signs: SignVector) -> CorrelationMatrix:
    """Предел полной корреляции R = eeᵗ."""
    e = signs.entries
    return CorrelationMatrix.from_array(np.outer(e, e))


def block_correlation(blocks: Sequence[CorrelationMatrix]) -> CorrelationMatrix:
    """Блочно-диагональная сборка, перекрёстные корреляции равны нулю."""
    if not blocks:
        raise ValidationError("Нужен хотя бы один блок.")
    if len(blocks) == 1:
        return blocks[0]
    return CorrelationMatrix.from_array(scipy.linalg.block_diag(*(b.values for b in blocks)))


def kappa(R: CorrelationMatrix) -> float:
    """
    Расстояние до полной корреляции κ = max_{i≠j}(1 − |ϱᵢⱼ|).

    Для n = 1 пар нет, возвращается 0: одно измерение полностью
    коррелировано само с собой.
    """
    if R.n == 1:
        return 0.0
    off_diagonal = R.values[~np.eye(R.n, dtype=bool)]
    return float(np.max(1.0 - np.abs(off_diagonal)))


def sign_vector(R: CorrelationMatrix, sign_threshold: float = constants.SIGN_THRESHOLD) -> SignVector:
    """
    Согласованные знаки e с e₁ = +1 и eⱼ = sign(ϱ₁ⱼ).

    Args:
        R: Корреляционная матрица в режиме сильной корреляции
        sign_threshold: Все |ϱᵢⱼ| вне диагонали должны его превышать

    Raises:
        IndeterminateSignError: |ϱᵢⱼ| ≤ sign_threshold для некоторой пары
        SignInconsistencyError: sign(ϱᵢⱼ) ≠ eᵢeⱼ для некоторой пары
    """
    values = R.values
    n = R.n
    rows, cols = np.triu_indices(n, k=1)
    weak = np.abs(values[rows, cols]) <= sign_threshold
    if np.any(weak):
        k = int(np.argmax(weak))
        pair = (int(rows[k]), int(cols[k]))
        raise IndeterminateSignError(pair, float(values[pair]), sign_threshold)

    e = np.sign(values[0])
    e[0] = 1.0
    mismatch = np.sign(values[rows, cols]) != e[rows] * e[cols]
    if np.any(mismatch):
        k = int(np.argmax(mismatch))
        pair = (int(rows[k]), int(cols[k]))
        logger.debug(f"Несогласованные знаки в паре {pair}")
        raise SignInconsistencyError(pair)
    return SignVector.from_sequence(e)


def assemble_covariance(model: CovarianceModel) -> np.ndarray:
    """Σᵢⱼ = σᵢσⱼϱᵢⱼ; точно симметрична, диагональ σᵢ²."""
    s = model.deviations
    sigma = np.outer(s, s) * model.correlation.values
    sigma.setflags(write=False)
    return sigma


def decompose_covariance(
    sigma: ArrayLike, psd_floor: float = constants.PSD_FLOOR
) -> tuple[np.ndarray, CorrelationMatrix]:
    """
    Обратная сборка: σᵢ = √Σᵢᵢ, ϱᵢⱼ = Σᵢⱼ/(σᵢσⱼ).

    Raises:
        ValidationError: Σᵢᵢ ≤ 0
    """
    matrix = validate_square(sigma, "covariance")
    variances = np.diag(matrix)
    if np.any(variances <= 0):
        raise ValidationError("Диагональ ковариационной матрицы должна быть > 0.")
    s = np.sqrt(variances)
    correlation = matrix / np.outer(s, s)
    correlation = (correlation + correlation.T) / 2.0
    np.fill_diagonal(correlation, 1.0)
    return _frozen(s), CorrelationMatrix.from_array(correlation, psd_floor=psd_floor)
