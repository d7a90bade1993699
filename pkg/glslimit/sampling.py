"""
Оценка среднего по равномерной выборке с автокоррелированным шумом.

Измерения в точках xᵢ = i/n, i = 0..n (n интервалов, n + 1 измерение),
шум с корреляцией exp(−|xᵢ − xⱼ|/δ), т.е. AR(1) с ϱ = exp(−1/(δn)).
Точная обратная дисперсия записывается трёхчленной формулой
через τᵢ = 1/σ(xᵢ); при n → ∞ она стремится к конечному пределу,
поэтому дисперсия при δ > 0 не убывает как 1/n.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.integrate
from numpy.typing import ArrayLike
from scipy.interpolate import CubicSpline

from . import constants
from .constants import SnrForm
from .logging_config import get_logger
from .validators import (
    CorrelationOverflowError,
    NoInteriorMaximumError,
    OutsideRegimeError,
    ValidationError,
    validate_correlation_coefficient,
    validate_count,
    validate_finite_array,
    validate_positive,
)

logger = get_logger(__name__)

SeriesKey = Union[int, str]


@dataclass(frozen=True, eq=False)
class SnrProfile:
    """
    Профиль точности τ(s) на [0, 1].

    Линейная форма τ(s) = τ₀(1 + αs) интегрируется аналитически,
    табличная интерполируется кубическим сплайном.
    """

    form: SnrForm
    tau0: float = 1.0
    alpha: float = 0.0
    grid: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)
    _spline: Optional[CubicSpline] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.form == SnrForm.LINEAR:
            validate_positive(self.tau0, "tau0")
            if not math.isfinite(self.alpha) or 1.0 + self.alpha <= 0:
                raise ValidationError(f"τ(1) = τ₀(1 + α) должно быть > 0, α = {self.alpha}.")
            return

        if self.grid is None or self.values is None:
            raise ValidationError("Табличному профилю нужны grid и values.")
        grid = validate_finite_array(self.grid, "grid", ndim=1)
        values = validate_finite_array(self.values, "values", ndim=1)
        if grid.shape != values.shape or grid.shape[0] < 2:
            raise ValidationError("grid и values должны иметь одинаковую длину ≥ 2.")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid должна строго возрастать.")
        if grid[0] > 0.0 or grid[-1] < 1.0:
            raise ValidationError("grid должна покрывать отрезок [0, 1].")
        spline = CubicSpline(grid, values)
        if np.any(spline(self._quadrature_nodes()) <= 0):
            raise ValidationError("τ(s) должна быть > 0 на [0, 1].")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_spline", spline)

    @classmethod
    def linear(cls, tau0: float = 1.0, alpha: float = 0.0) -> "SnrProfile":
        return cls(form=SnrForm.LINEAR, tau0=tau0, alpha=alpha)

    @classmethod
    def normalized_linear(cls, alpha: float) -> "SnrProfile":
        """τ(s) = (1 + αs)/(1 + α), так что τ(1) = 1."""
        if 1.0 + alpha <= 0:
            raise ValidationError(f"Нормировка τ(1) = 1 невозможна при α = {alpha}.")
        return cls.linear(tau0=1.0 / (1.0 + alpha), alpha=alpha)

    @classmethod
    def tabulated(cls, grid: ArrayLike, values: ArrayLike) -> "SnrProfile":
        return cls(form=SnrForm.TABULATED, grid=np.asarray(grid, dtype=float), values=np.asarray(values, dtype=float))

    @staticmethod
    def _quadrature_nodes() -> np.ndarray:
        return np.linspace(0.0, 1.0, constants.TRAPEZOID_PANELS + 1)

    def tau(self, s: ArrayLike) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.form == SnrForm.LINEAR:
            return self.tau0 * (1.0 + self.alpha * s)
        return self._spline(s)

    def derivative(self, s: ArrayLike) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.form == SnrForm.LINEAR:
            return np.full_like(s, self.tau0 * self.alpha)
        return self._spline(s, 1)

    def integral_tau_squared(self) -> float:
        """∫₀¹ τ(s)² ds."""
        if self.form == SnrForm.LINEAR:
            a = self.alpha
            return self.tau0**2 * (1.0 + a + a * a / 3.0)
        nodes = self._quadrature_nodes()
        return float(scipy.integrate.trapezoid(self.tau(nodes) ** 2, nodes))

    def integral_derivative_squared(self) -> float:
        """∫₀¹ τ′(s)² ds."""
        if self.form == SnrForm.LINEAR:
            return (self.tau0 * self.alpha) ** 2
        nodes = self._quadrature_nodes()
        return float(scipy.integrate.trapezoid(self.derivative(nodes) ** 2, nodes))

    def endpoints_squared(self) -> float:
        """τ(0)² + τ(1)²."""
        ends = self.tau(np.array([0.0, 1.0]))
        return float(np.sum(ends**2))


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """n интервалов, длина корреляции δ и профиль τ; δ = 0 означает ϱ = 0."""

    n: int
    delta: float
    profile: SnrProfile

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", validate_count(self.n, "n"))
        delta = float(self.delta)
        if not math.isfinite(delta) or delta < 0:
            raise ValidationError(f"delta должно быть ≥ 0, получено {self.delta!r}.")
        object.__setattr__(self, "delta", delta)

    @property
    def locations(self) -> np.ndarray:
        return np.arange(self.n + 1, dtype=float) / self.n

    @property
    def taus(self) -> np.ndarray:
        return self.profile.tau(self.locations)

    @property
    def x(self) -> float:
        """x = 1/(δn), ϱ = e⁻ˣ."""
        return math.inf if self.delta == 0 else 1.0 / (self.delta * self.n)

    @property
    def rho(self) -> float:
        return 0.0 if self.delta == 0 else math.exp(-self.x)


@dataclass(frozen=True)
class AsymptoticValue:
    value: float
    neglected_order: float


def _three_term(taus: np.ndarray, rho: float, one_minus_rho: float, one_minus_rho_sq: float) -> float:
    squares = float(np.sum(taus**2))
    increments = float(np.sum(np.diff(taus) ** 2))
    ends = taus[0] ** 2 + taus[-1] ** 2
    return (one_minus_rho**2 * squares + rho * increments + rho * one_minus_rho * ends) / one_minus_rho_sq


def ar1_mean_inverse_variance(taus: ArrayLike, rho: float) -> float:
    """
    τᵗR⁻¹τ для AR(1) без плотного обращения.

    1/(1−ϱ²)·[(1−ϱ)²Στᵢ² + ϱΣ(τᵢ₊₁ − τᵢ)² + ϱ(1−ϱ)(τ₀² + τₙ²)].

    Raises:
        ValidationError: τᵢ ≤ 0 или |ϱ| ≥ 1
    """
    values = validate_finite_array(taus, "taus", ndim=1)
    if np.any(values <= 0):
        raise ValidationError("taus должны быть > 0.")
    rho = validate_correlation_coefficient(rho)
    return _three_term(values, rho, 1.0 - rho, (1.0 - rho) * (1.0 + rho))


def inverse_variance_exact(plan: SamplingPlan) -> float:
    """
    Точная обратная дисперсия 𝒱⁻¹(n, δ) оценки среднего.

    1 − ϱ и 1 − ϱ² считаются через expm1, чтобы не терять точность
    при δn ≫ 1.

    Raises:
        CorrelationOverflowError: 1/(δn) ниже порога, ϱ неотличимо от 1;
            значение даёт limiting_variance
    """
    taus = plan.taus
    if plan.delta == 0:
        return float(np.sum(taus**2))
    x = plan.x
    if x < constants.OVERFLOW_CUTOFF:
        raise CorrelationOverflowError(
            f"1/(δn) = {x:.3e} < {constants.OVERFLOW_CUTOFF:.0e}: ϱ численно равно 1, "
            "используйте limiting_variance."
        )
    rho = math.exp(-x)
    return _three_term(taus, rho, -math.expm1(-x), -math.expm1(-2.0 * x))


def asymptotic_kernels(x: float) -> tuple[float, float]:
    """
    Ядра f(x) = (1 − e⁻ˣ)/(x(1 + e⁻ˣ)) и g(x) = xe⁻ˣ/(1 − e⁻²ˣ).

    Оба → ½ при x → 0; ниже порога используется ряд до x⁶.
    """
    x = validate_positive(x, "x")
    if x < constants.KERNEL_SERIES_CUTOFF:
        x2 = x * x
        f = 0.5 - x2 / 24.0 + x2 * x2 / 240.0 - 17.0 * x2**3 / 40320.0
        g = 0.5 - x2 / 12.0 + 7.0 * x2 * x2 / 720.0 - 31.0 * x2**3 / 30240.0
        return f, g
    f = math.tanh(x / 2.0) / x
    g = x * math.exp(-x) / -math.expm1(-2.0 * x)
    return f, g


def inverse_variance_kernel_form(plan: SamplingPlan) -> float:
    """
    Та же 𝒱⁻¹(n, δ), записанная через ядра f и g, x = 1/(δn):

    (1/δ)f(x)·Στᵢ²/n + δg(x)·nΣ(τᵢ₊₁ − τᵢ)² + (τ₀² + τₙ²)/(1 + eˣ).
    """
    taus = plan.taus
    if plan.delta == 0:
        return float(np.sum(taus**2))
    n, delta, x = plan.n, plan.delta, plan.x
    f, g = asymptotic_kernels(x)
    squares = float(np.sum(taus**2))
    increments = float(np.sum(np.diff(taus) ** 2))
    ends = taus[0] ** 2 + taus[-1] ** 2
    # 1/(1 + eˣ) = e⁻ˣ/(1 + e⁻ˣ) не переполняется при больших x
    boundary = math.exp(-x) / (1.0 + math.exp(-x))
    return f * squares / (delta * n) + delta * g * n * increments + ends * boundary


def inverse_variance_asymptotic(profile: SnrProfile, delta: float, n: int) -> AsymptoticValue:
    """
    Главный член 𝒱⁻¹ при δn ≫ 1.

    δ/2·∫τ′² + 1/(2δ)·∫τ² + ½(τ(0)² + τ(1)²); отброшенный член
    оценивается как (δ/2·∫τ′² + 1/(2δ)·∫τ²)·(δn)⁻².

    Raises:
        OutsideRegimeError: δn ≤ 1
    """
    delta = validate_positive(delta, "delta")
    n = validate_count(n, "n")
    if delta * n <= 1.0:
        raise OutsideRegimeError(f"Асимптотика требует δn > 1, получено δn = {delta * n:g}.")
    bulk = delta / 2.0 * profile.integral_derivative_squared() + profile.integral_tau_squared() / (2.0 * delta)
    value = bulk + profile.endpoints_squared() / 2.0
    return AsymptoticValue(value=value, neglected_order=bulk / (delta * n) ** 2)


def limiting_variance(profile: SnrProfile, delta: float) -> float:
    """𝒱 = 2δ/(∫τ² + δ(τ(0)² + τ(1)²) + δ²∫τ′²), предел n → ∞."""
    delta = validate_positive(delta, "delta")
    denominator = (
        profile.integral_tau_squared()
        + delta * profile.endpoints_squared()
        + delta * delta * profile.integral_derivative_squared()
    )
    return 2.0 * delta / denominator


def delta_at_max_variance(profile: SnrProfile) -> float:
    """
    δ, при котором limiting_variance максимальна: δ² = ∫τ²/∫τ′².

    Raises:
        NoInteriorMaximumError: τ постоянна, 𝒱 монотонно растёт по δ
    """
    slope = profile.integral_derivative_squared()
    if slope == 0:
        raise NoInteriorMaximumError("∫τ′² = 0: при постоянном τ внутреннего максимума нет.")
    return math.sqrt(profile.integral_tau_squared() / slope)


def variance_at(profile: SnrProfile, n: int, delta: float) -> float:
    """𝒱(n, δ); при переполнении ϱ возвращается предел n → ∞."""
    try:
        return 1.0 / inverse_variance_exact(SamplingPlan(n=n, delta=delta, profile=profile))
    except CorrelationOverflowError:
        logger.debug(f"δn = {delta * n:g}: 𝒱 заменена пределом")
        return limiting_variance(profile, delta)


def _series_label(key: SeriesKey) -> str:
    return constants.LIMIT_MARKER if key == constants.LIMIT_MARKER else f"n={key}"


def _validate_series(n_values: Sequence[SeriesKey]) -> list[SeriesKey]:
    if not n_values:
        raise ValidationError("Нужна хотя бы одна серия.")
    keys: list[SeriesKey] = []
    for key in n_values:
        if key == constants.LIMIT_MARKER:
            keys.append(constants.LIMIT_MARKER)
        else:
            keys.append(validate_count(key, "n"))
    return keys


def _map(func, items: list, workers: Optional[int]) -> list:
    if workers is None or workers <= 1:
        return [func(item) for item in items]
    # map сохраняет порядок, значения не зависят от числа потоков
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def variance_curve_vs_delta(
    profile: SnrProfile,
    deltas: ArrayLike,
    n_values: Sequence[SeriesKey],
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    Таблица 𝒱(n, δ) по сетке δ.

    Args:
        profile: Профиль τ
        deltas: Сетка δ > 0
        n_values: Числа интервалов и/или маркер "limit" для n → ∞
        workers: Число потоков; результат совпадает с последовательным

    Returns:
        DataFrame со столбцами delta, n=…, limit
    """
    grid = validate_finite_array(deltas, "deltas", ndim=1)
    if np.any(grid <= 0):
        raise ValidationError("Все delta должны быть > 0.")
    keys = _validate_series(n_values)

    def row(delta: float) -> list[float]:
        return [
            limiting_variance(profile, delta) if key == constants.LIMIT_MARKER else variance_at(profile, key, delta)
            for key in keys
        ]

    rows = _map(row, [float(d) for d in grid], workers)
    table = pd.DataFrame(rows, columns=[_series_label(key) for key in keys])
    table.insert(0, "delta", grid)
    logger.debug(f"Таблица 𝒱(δ): {len(grid)} точек, серии {list(table.columns[1:])}")
    return table


def variance_curve_vs_n(
    profile: SnrProfile,
    deltas: Union[float, Sequence[float]],
    n_values: ArrayLike,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    Таблица 𝒱(n, δ) по сетке n, по столбцу на каждое δ ≥ 0.

    При δ = 0 шум некоррелирован и 𝒱 убывает как 1/(n + 1).
    """
    delta_list = [float(deltas)] if np.isscalar(deltas) else [float(d) for d in deltas]
    for delta in delta_list:
        if not math.isfinite(delta) or delta < 0:
            raise ValidationError(f"delta должно быть ≥ 0, получено {delta!r}.")
    counts = [validate_count(n, "n") for n in np.atleast_1d(np.asarray(n_values))]

    def row(n: int) -> list[float]:
        return [variance_at(profile, n, delta) for delta in delta_list]

    rows = _map(row, counts, workers)
    table = pd.DataFrame(rows, columns=[f"delta={delta:g}" for delta in delta_list])
    table.insert(0, "n", counts)
    return table
