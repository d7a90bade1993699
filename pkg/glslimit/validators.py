"""Ошибки инструментария и валидация входных данных."""

import math
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike


class GlsLimitError(Exception):
    """Базовая ошибка инструментария."""
    pass


class ValidationError(GlsLimitError):
    """Ошибка валидации данных."""
    pass


class DimensionMismatchError(ValidationError):
    """Размерности аргументов не согласованы."""
    pass


class ProblemFileError(ValidationError):
    """Ошибка разбора файла задачи."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field is not None:
            location.append(f"поле '{field}'")
        if line is not None:
            location.append(f"строка {line}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(prefix + message)
        self.detail = message
        self.field = field
        self.line = line


class NumericalError(GlsLimitError):
    """Задача численно неразрешима в запрошенном режиме."""
    pass


class SingularCovarianceError(NumericalError):
    def __init__(self, smallest_eigenvalue: float, ratio: float, floor: float):
        super().__init__(
            f"Ковариационная матрица вырождена: λ_min = {smallest_eigenvalue:.3e}, "
            f"λ_min/λ_max = {ratio:.3e} < {floor:.1e}."
        )
        self.smallest_eigenvalue = smallest_eigenvalue
        self.ratio = ratio
        self.floor = floor


class IllConditionedCovarianceError(NumericalError):
    def __init__(self, ratio: float, floor: float):
        super().__init__(
            f"λ_min/λ_max = {ratio:.3e} ниже порога обусловленности {floor:.1e}; "
            "полное решение невозможно, используйте limit_variance_prediction "
            "(подпространство без шума)."
        )
        self.ratio = ratio
        self.floor = floor


class RankDeficientDesignError(NumericalError):
    def __init__(self, rank: int, expected: int):
        super().__init__(
            f"Матрица плана имеет численный ранг {rank}, ожидался {expected}."
        )
        self.rank = rank
        self.expected = expected


class NotPositiveSemidefiniteError(NumericalError):
    def __init__(self, min_eigenvalue: float, floor: float):
        super().__init__(
            f"Матрица не является неотрицательно определённой: "
            f"λ_min = {min_eigenvalue:.3e} ниже допуска −{floor:.1e}·λ_max."
        )
        self.min_eigenvalue = min_eigenvalue
        self.floor = floor


class StructuralError(GlsLimitError):
    """Нарушена структура, на которую опирается предельный анализ."""
    pass


class SignInconsistencyError(StructuralError):
    def __init__(self, pair: tuple[int, int]):
        i, j = pair
        super().__init__(
            f"Знаки корреляций несогласованы: sign(ϱ[{i},{j}]) ≠ e[{i}]·e[{j}]."
        )
        self.pair = pair


class IndeterminateSignError(StructuralError):
    def __init__(self, pair: tuple[int, int], value: float, threshold: float):
        i, j = pair
        super().__init__(
            f"|ϱ[{i},{j}]| = {abs(value):.3g} не превышает порог {threshold:g}: "
            "знак не определяется однозначно."
        )
        self.pair = pair
        self.value = value
        self.threshold = threshold


class NotInColumnSpaceError(StructuralError):
    def __init__(self, residual: float, tol: float):
        super().__init__(
            f"v₁ не лежит в пространстве столбцов X (невязка {residual:.3e} > {tol:.1e}); "
            "в этом случае полная дисперсия стремится к нулю, репараметризация не нужна."
        )
        self.residual = residual
        self.tol = tol


class UnderdeterminedLimitError(StructuralError):
    pass


class RegimeError(GlsLimitError):
    """Аргументы вне области применимости формулы."""
    pass


class DegenerateLimitError(RegimeError):
    pass


class OutsideRegimeError(RegimeError):
    pass


class CorrelationOverflowError(RegimeError):
    pass


class NoInteriorMaximumError(RegimeError):
    pass


class NotNegativeWeightRegimeError(RegimeError):
    def __init__(self, rho: float, threshold: float):
        super().__init__(
            f"ρ = {rho:g} не превышает σ₂/σ₁ = {threshold:g}: "
            "отрицательного веса нет."
        )
        self.rho = rho
        self.threshold = threshold


def validate_count(value: int, name: str, minimum: int = 1) -> int:
    """
    Валидация целого счётчика.

    Raises:
        ValidationError: Если значение не целое или меньше минимума
    """
    if isinstance(value, bool) or int(value) != value:
        raise ValidationError(f"{name} должно быть целым, получено {value!r}.")
    value = int(value)
    if value < minimum:
        raise ValidationError(f"{name} должно быть ≥ {minimum}, получено {value}.")
    return value


def validate_positive(value: float, name: str) -> float:
    """
    Валидация строго положительного конечного числа.

    Raises:
        ValidationError: Если число не конечно или ≤ 0
    """
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} должно быть конечным и > 0, получено {value!r}.")
    return value


def validate_correlation_coefficient(rho: float, name: str = "rho", closed: bool = False) -> float:
    """
    Валидация коэффициента корреляции.

    Args:
        rho: Коэффициент
        name: Имя параметра для сообщения
        closed: Допускать ли границы |ρ| = 1

    Returns:
        Коэффициент как float

    Raises:
        ValidationError: Если |ρ| ≥ 1 (или > 1 при closed=True)
    """
    rho = float(rho)
    if not math.isfinite(rho):
        raise ValidationError(f"{name} должно быть конечным.")
    if closed and abs(rho) > 1:
        raise ValidationError(f"|{name}| должно быть ≤ 1, получено {rho}.")
    if not closed and abs(rho) >= 1:
        raise ValidationError(
            f"|{name}| должно быть < 1, получено {rho}; "
            "для границы используйте rank_one_limit."
        )
    return rho


def validate_finite_array(values: ArrayLike, name: str, ndim: Optional[int] = None) -> np.ndarray:
    """
    Приводит данные к массиву float64 и проверяет конечность.

    Raises:
        ValidationError: Если есть NaN/inf или неверная размерность
    """
    try:
        array = np.array(values, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: ожидался числовой массив.")
    if ndim is not None and array.ndim != ndim:
        raise ValidationError(f"{name}: ожидалась размерность {ndim}, получено {array.ndim}.")
    if array.size == 0:
        raise ValidationError(f"{name} не может быть пустым.")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} содержит нечисловые значения.")
    return array


def validate_square(matrix: ArrayLike, name: str) -> np.ndarray:
    array = validate_finite_array(matrix, name, ndim=2)
    if array.shape[0] != array.shape[1]:
        raise ValidationError(f"{name} должна быть квадратной, форма {array.shape}.")
    return array


def validate_deviations(sigmas: ArrayLike, name: str = "sigma") -> np.ndarray:
    """
    Валидация вектора стандартных отклонений σᵢ > 0.

    Raises:
        ValidationError: Если есть σᵢ ≤ 0
    """
    array = validate_finite_array(sigmas, name, ndim=1)
    if np.any(array <= 0):
        index = int(np.argmax(array <= 0))
        raise ValidationError(f"{name}[{index}] = {array[index]} должно быть > 0.")
    return array


def validate_same_size(expected: int, actual: int, what: str) -> None:
    if expected != actual:
        raise DimensionMismatchError(
            f"{what}: ожидалась длина {expected}, получено {actual}."
        )
