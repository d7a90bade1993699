"""Матрица плана X и вектор наблюдений Y."""

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from . import constants
from .validators import ValidationError, validate_finite_array


def numerical_rank(matrix: np.ndarray, scale: float, rtol: float = constants.RANK_RTOL) -> int:
    """Число сингулярных чисел выше rtol·scale."""
    if matrix.size == 0:
        return 0
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(singular_values > rtol * scale))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    rank: int
    largest_singular_value: float
    rank_rtol: float = constants.RANK_RTOL

    @classmethod
    def from_array(cls, values: ArrayLike, rank_rtol: float = constants.RANK_RTOL) -> "DesignMatrix":
        """
        Проверяет матрицу плана n × m.

        Дефицит ранга не скрывается, а сохраняется в поле rank;
        отказ происходит в операциях, которым нужен полный ранг.

        Raises:
            ValidationError: Не матрица, нечисловые значения или n < m
        """
        array = validate_finite_array(values, "design")
        if array.ndim == 1:
            array = array[:, None]
        if array.ndim != 2:
            raise ValidationError("design: ожидалась матрица n × m.")
        n, m = array.shape
        if n < m:
            raise ValidationError(f"design: нужно n ≥ m, получено n = {n}, m = {m}.")
        largest = float(np.linalg.norm(array, 2))
        array.setflags(write=False)
        return cls(
            values=array,
            rank=numerical_rank(array, largest, rank_rtol),
            largest_singular_value=largest,
            rank_rtol=rank_rtol,
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def full_rank(self) -> bool:
        return self.rank == self.m


@dataclass(frozen=True, eq=False)
class Observation:
    y: np.ndarray

    @classmethod
    def from_array(cls, values: ArrayLike) -> "Observation":
        array = validate_finite_array(values, "y", ndim=1)
        array.setflags(write=False)
        return cls(y=array)

    @property
    def n(self) -> int:
        return self.y.shape[0]


DesignLike = Union[DesignMatrix, ArrayLike]
ObservationLike = Union[Observation, ArrayLike]


def as_design(X: DesignLike, rank_rtol: float = constants.RANK_RTOL) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        if X.rank_rtol == rank_rtol:
            return X
        return DesignMatrix.from_array(X.values, rank_rtol=rank_rtol)
    return DesignMatrix.from_array(X, rank_rtol=rank_rtol)


def as_observation(y: ObservationLike) -> Observation:
    if isinstance(y, Observation):
        return y
    return Observation.from_array(y)
