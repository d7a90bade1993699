"""
Проверка аналитической ковариации оценки методом Монте-Карло.

Шум порождается счётчиковым генератором Philox с ключом seed:
испытание i занимает блоки счётчика [i·k + 1, (i + 1)·k], k = ⌈n/4⌉,
поэтому выборка не зависит от разбиения испытаний на части.
Гауссовы величины получаются обращением функции распределения.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import scipy.special
from numpy.typing import ArrayLike

from . import constants
from .constants import EstimatorMode
from .design import DesignLike, as_design, numerical_rank
from .gls import estimator_covariance, estimator_weights, two_point_weights
from .logging_config import get_logger
from .subspace import limiting_covariance, noise_free_count, spectral_decompose
from .validators import (
    NotNegativeWeightRegimeError,
    RankDeficientDesignError,
    ValidationError,
    validate_count,
    validate_finite_array,
    validate_positive,
    validate_same_size,
    validate_square,
)

logger = get_logger(__name__)

_SEED_LIMIT = 2**64
_BLOCK = 4  # 64-битных слов на один блок Philox


def _validate_seed(seed: int) -> int:
    seed = validate_count(seed, "seed", minimum=0)
    if seed >= _SEED_LIMIT:
        raise ValidationError(f"seed должно быть < 2⁶⁴, получено {seed}.")
    return seed


@dataclass(frozen=True, eq=False)
class McConfig:
    trials: int
    seed: int = 0
    beta_true: Optional[np.ndarray] = None
    parallel_chunks: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", validate_count(self.trials, "trials", minimum=2))
        object.__setattr__(self, "seed", _validate_seed(self.seed))
        object.__setattr__(self, "parallel_chunks", validate_count(self.parallel_chunks, "parallel_chunks"))
        if self.beta_true is not None:
            object.__setattr__(self, "beta_true", validate_finite_array(self.beta_true, "beta_true", ndim=1))


@dataclass(frozen=True, eq=False)
class McReport:
    mode: EstimatorMode
    trials: int
    seed: int
    empirical_mean: np.ndarray
    empirical_covariance: np.ndarray
    analytic_covariance: np.ndarray
    max_standardized_deviation: float
    mean_standardized_deviation: float
    outside_range_fraction: Optional[float] = None
    negative_weights: list[tuple[int, int]] = field(default_factory=list)
    threshold: float = constants.MC_PASS_THRESHOLD

    @property
    def passed(self) -> bool:
        return (
            self.max_standardized_deviation <= self.threshold
            and self.mean_standardized_deviation <= self.threshold
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "trials": self.trials,
            "seed": self.seed,
            "empirical_mean": self.empirical_mean.tolist(),
            "empirical_covariance": self.empirical_covariance.tolist(),
            "analytic_covariance": self.analytic_covariance.tolist(),
            "max_standardized_deviation": self.max_standardized_deviation,
            "mean_standardized_deviation": self.mean_standardized_deviation,
            "outside_range_fraction": self.outside_range_fraction,
            "negative_weights": [list(pair) for pair in self.negative_weights],
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class PeelleRecord:
    sigma1: float
    sigma2: float
    rho: float
    mu: float
    weights: tuple[float, float]
    y: tuple[float, float]
    estimate: float

    @property
    def below_range(self) -> bool:
        return self.estimate < min(self.y)

    @property
    def above_range(self) -> bool:
        return self.estimate > max(self.y)

    @property
    def outside_range(self) -> bool:
        return self.below_range or self.above_range

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "rho": self.rho,
            "mu": self.mu,
            "weights": list(self.weights),
            "y": list(self.y),
            "estimate": self.estimate,
            "below_range": self.below_range,
            "above_range": self.above_range,
        }


@dataclass(frozen=True)
class PeelleSummary:
    trials: int
    negative_w1_all: bool
    outside_fraction: float
    below_fraction: float
    above_fraction: float


def _uniforms(seed: int, start: int, count: int, n: int) -> np.ndarray:
    blocks = -(-n // _BLOCK)
    bit_generator = np.random.Philox(key=seed, counter=start * blocks)
    raw = bit_generator.random_raw(count * blocks * _BLOCK).reshape(count, blocks * _BLOCK)[:, :n]
    # 53 старших бита, сдвиг на полшага: u ∈ (0, 1) строго
    return (raw >> np.uint64(11)).astype(float) * 2.0**-53 + 2.0**-54


def _factor(matrix: np.ndarray, clamp_rtol: float) -> np.ndarray:
    """L с LLᵗ = Σ: Холецкий, иначе спектральный корень."""
    scale = float(np.max(np.diag(matrix)))
    try:
        L = np.linalg.cholesky(matrix)
        if float(np.min(np.diag(L))) ** 2 > clamp_rtol * scale:
            return L
    except np.linalg.LinAlgError:
        pass
    spectrum = spectral_decompose(matrix, clamp_rtol=clamp_rtol)
    eigenvalues = np.where(spectrum.eigenvalues <= clamp_rtol * spectrum.eigenvalues[0], 0.0, spectrum.eigenvalues)
    logger.debug(f"Спектральный корень: ранг {int(np.sum(eigenvalues > 0))} из {spectrum.n}")
    return spectrum.eigenvectors * np.sqrt(eigenvalues)


def _chunks(count: int, parts: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, count, min(parts, count) + 1).astype(int)
    return [(int(a), int(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def sample_correlated_noise(
    Sigma: ArrayLike,
    count: int,
    seed: int,
    start: int = 0,
    parallel_chunks: int = 1,
    clamp_rtol: float = constants.MC_CLAMP_RTOL,
) -> np.ndarray:
    """
    Независимые реализации η с E[η] = 0 и E[ηηᵗ] = Σ.

    Args:
        Sigma: Неотрицательно определённая Σ, вырожденная допускается
        count: Число испытаний
        seed: Ключ генератора, 0 ≤ seed < 2⁶⁴
        start: Номер первого испытания
        parallel_chunks: Число частей для параллельной генерации

    Returns:
        Массив count × n

    Raises:
        NotPositiveSemidefiniteError: λ_min ниже −clamp_rtol·λ₁
    """
    matrix = validate_square(Sigma, "covariance")
    count = validate_count(count, "count")
    seed = _validate_seed(seed)
    start = validate_count(start, "start", minimum=0)
    parallel_chunks = validate_count(parallel_chunks, "parallel_chunks")
    n = matrix.shape[0]
    L = _factor(matrix, clamp_rtol)

    pieces = _chunks(count, parallel_chunks)
    if len(pieces) == 1:
        uniforms = _uniforms(seed, start, count, n)
    else:
        with ThreadPoolExecutor(max_workers=len(pieces)) as executor:
            parts = executor.map(lambda piece: _uniforms(seed, start + piece[0], piece[1], n), pieces)
            uniforms = np.concatenate(list(parts))
    return scipy.special.ndtri(uniforms) @ L.T


def _standardized(deviation: np.ndarray, standard_error: np.ndarray, zero_tol: float) -> float:
    # При нулевой аналитической дисперсии допускается только шум округления
    scaled = np.where(
        standard_error > 0,
        deviation / np.where(standard_error > 0, standard_error, 1.0),
        np.where(deviation <= zero_tol, 0.0, math.inf),
    )
    return float(np.max(scaled))


def _limit_estimates(
    design_values: np.ndarray,
    matrix: np.ndarray,
    observations: np.ndarray,
    clamp_rtol: float,
    rank_rtol: float = constants.RANK_RTOL,
) -> np.ndarray:
    spectrum = spectral_decompose(matrix, clamp_rtol=max(clamp_rtol, constants.CLAMP_RTOL))
    noisy = spectrum.n - noise_free_count(spectrum, clamp_rtol)
    free = spectrum.eigenvectors[:, noisy:].T @ design_values
    m = design_values.shape[1]
    rank = numerical_rank(free, float(np.linalg.norm(design_values, 2)), rank_rtol)
    if rank < m:
        raise RankDeficientDesignError(rank, m)
    z_free = observations @ spectrum.eigenvectors[:, noisy:]
    return z_free @ np.linalg.pinv(free).T


def empirical_estimator_covariance(
    X: DesignLike,
    Sigma: ArrayLike,
    config: McConfig,
    mode: EstimatorMode = EstimatorMode.BLUE,
    analytic_covariance: Optional[ArrayLike] = None,
    conditioning_floor: float = constants.CONDITIONING_FLOOR,
    clamp_rtol: float = constants.MC_CLAMP_RTOL,
    rank_rtol: float = constants.RANK_RTOL,
) -> McReport:
    """
    Эмпирическая ковариация оценки против аналитической V.

    В режиме blue оценка β̂ = W·y; в режиме limit используется точное
    решение по строкам без шума (Σ вырождена).

    Args:
        X: Матрица плана
        Sigma: Ковариация шума
        config: Число испытаний, seed, β и число частей
        mode: blue или limit
        analytic_covariance: Замена аналитической V (самопроверка)
        rank_rtol: Относительный порог численного ранга X

    Raises:
        ValidationError: Меньше MC_MIN_TRIALS испытаний
    """
    design = as_design(X, rank_rtol)
    matrix = validate_square(Sigma, "covariance")
    validate_same_size(design.n, matrix.shape[0], "covariance")
    mode = EstimatorMode(mode)
    if config.trials < constants.MC_MIN_TRIALS:
        raise ValidationError(
            f"Для оценки ковариации нужно ≥ {constants.MC_MIN_TRIALS} испытаний, получено {config.trials}."
        )
    beta_true = np.zeros(design.m) if config.beta_true is None else config.beta_true
    validate_same_size(design.m, beta_true.shape[0], "beta_true")

    negative: list[tuple[int, int]] = []
    if mode == EstimatorMode.BLUE:
        weights = estimator_weights(design, matrix, conditioning_floor, rank_rtol)
        analytic = estimator_covariance(design, matrix, conditioning_floor, rank_rtol)
        rows, cols = np.nonzero(weights < 0)
        negative = [(int(i), int(j)) for i, j in zip(rows, cols)]
    else:
        analytic = limiting_covariance(design, matrix, clamp_rtol, rank_rtol)
    if analytic_covariance is not None:
        analytic = validate_square(analytic_covariance, "expected_covariance")
        validate_same_size(design.m, analytic.shape[0], "expected_covariance")

    logger.info(f"Монте-Карло: {config.trials} испытаний, режим {mode.value}, seed {config.seed}")
    noise = sample_correlated_noise(
        matrix, config.trials, config.seed, parallel_chunks=config.parallel_chunks, clamp_rtol=clamp_rtol
    )
    observations = design.values @ beta_true + noise
    if mode == EstimatorMode.BLUE:
        estimates = observations @ weights.T
    else:
        estimates = _limit_estimates(design.values, matrix, observations, clamp_rtol, rank_rtol)

    trials = config.trials
    mean = estimates.mean(axis=0)
    mean_tol = math.sqrt(constants.MC_ZERO_VARIANCE_TOL) * max(1.0, float(np.max(np.abs(beta_true))))
    empirical = np.atleast_2d(np.cov(estimates, rowvar=False, ddof=1))
    diagonal = np.diag(analytic)
    # Дисперсия выборочной ковариации гауссовых величин: (Vᵢⱼ² + VᵢᵢVⱼⱼ)/(N − 1)
    covariance_error = np.sqrt(np.clip(analytic**2 + np.outer(diagonal, diagonal), 0.0, None) / (trials - 1))
    mean_error = np.sqrt(np.clip(diagonal, 0.0, None) / trials)

    outside: Optional[float] = None
    if design.m == 1 and np.all(design.values == 1.0):
        estimate = estimates[:, 0]
        outside_mask = (estimate < observations.min(axis=1)) | (estimate > observations.max(axis=1))
        outside = float(np.mean(outside_mask))

    report = McReport(
        mode=mode,
        trials=trials,
        seed=config.seed,
        empirical_mean=mean,
        empirical_covariance=empirical,
        analytic_covariance=analytic,
        max_standardized_deviation=_standardized(
            np.abs(empirical - analytic), covariance_error, constants.MC_ZERO_VARIANCE_TOL
        ),
        mean_standardized_deviation=_standardized(np.abs(mean - beta_true), mean_error, mean_tol),
        outside_range_fraction=outside,
        negative_weights=negative,
    )
    logger.info(
        f"Монте-Карло завершён: отклонение {report.max_standardized_deviation:.3g} ст. ошибок, "
        f"{'пройдено' if report.passed else 'не пройдено'}"
    )
    return report


def _two_point_covariance(sigma1: float, sigma2: float, rho: float) -> np.ndarray:
    off = rho * sigma1 * sigma2
    return np.array([[sigma1**2, off], [off, sigma2**2]])


def _validate_peelle(sigma1: float, sigma2: float, rho: float) -> tuple[float, float, float, tuple[float, float]]:
    sigma1 = validate_positive(sigma1, "sigma1")
    sigma2 = validate_positive(sigma2, "sigma2")
    if not sigma1 > sigma2:
        raise ValidationError(f"Нужно σ₁ > σ₂, получено σ₁ = {sigma1:g}, σ₂ = {sigma2:g}.")
    rho = float(rho)
    if not math.isfinite(rho) or rho >= 1.0:
        raise ValidationError(f"Нужно ρ < 1, получено {rho!r}.")
    threshold = sigma2 / sigma1
    if rho <= threshold:
        raise NotNegativeWeightRegimeError(rho, threshold)
    weights = two_point_weights(sigma1, sigma2, rho)
    return sigma1, sigma2, rho, weights


def peelle_demo(sigma1: float, sigma2: float, rho: float, mu: float, seed: int, trial: int = 0) -> PeelleRecord:
    """
    Одна реализация (y₁, y₂) в режиме отрицательного веса w₁ < 0.

    Raises:
        NotNegativeWeightRegimeError: ρ ≤ σ₂/σ₁
    """
    sigma1, sigma2, rho, weights = _validate_peelle(sigma1, sigma2, rho)
    noise = sample_correlated_noise(_two_point_covariance(sigma1, sigma2, rho), 1, seed, start=trial)[0]
    y = (float(mu + noise[0]), float(mu + noise[1]))
    estimate = weights[0] * y[0] + weights[1] * y[1]
    return PeelleRecord(sigma1=sigma1, sigma2=sigma2, rho=rho, mu=float(mu), weights=weights, y=y, estimate=estimate)


def peelle_frequency(sigma1: float, sigma2: float, rho: float, mu: float, trials: int, seed: int) -> PeelleSummary:
    """Доля оценок вне [min y, max y] по trials реализациям."""
    sigma1, sigma2, rho, weights = _validate_peelle(sigma1, sigma2, rho)
    trials = validate_count(trials, "trials")
    y = mu + sample_correlated_noise(_two_point_covariance(sigma1, sigma2, rho), trials, seed)
    estimate = y @ np.array(weights)
    below = estimate < y.min(axis=1)
    above = estimate > y.max(axis=1)
    return PeelleSummary(
        trials=trials,
        negative_w1_all=bool(weights[0] < 0),
        outside_fraction=float(np.mean(below | above)),
        below_fraction=float(np.mean(below)),
        above_fraction=float(np.mean(above)),
    )
