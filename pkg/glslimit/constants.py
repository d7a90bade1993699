"""Константы и пороги численного инструментария."""

from enum import Enum, IntEnum


class CorrelationModelKind(str, Enum):
    """Модели корреляционной матрицы в файле задачи."""
    AR1 = "ar1"
    EXPONENTIAL = "exp"
    RANK_ONE = "rank_one"
    BLOCK = "block"


class SnrForm(str, Enum):
    """Формы профиля отношения сигнал/шум τ(s)."""
    LINEAR = "linear"
    TABULATED = "tabulated"


class OutputFormat(str, Enum):
    """Форматы выходных файлов."""
    CSV = "csv"
    JSON = "json"


class EstimatorMode(str, Enum):
    """Режим оценивателя в Монте-Карло."""
    BLUE = "blue"
    LIMIT = "limit"


class ExitCode(IntEnum):
    """Коды завершения CLI."""
    OK = 0
    VALIDATION_FAILURE = 1
    INPUT_ERROR = 2


TOOLKIT_NAME = "glslimit"

# Корреляционные матрицы
PSD_FLOOR = 1e-10           # λ_min ≥ −PSD_FLOOR·λ_max
SIGN_THRESHOLD = 0.5
DIAGONAL_TOL = 1e-12
ENTRY_TOL = 1e-12

# Оцениватель
CONDITIONING_FLOOR = 1e-13  # λ_min/λ_max для полного решения
RANK_RTOL = 1e-10           # относительно наибольшего сингулярного числа
TIE_GAP = 1e-12             # σ₁ = σ₂ с относительной точностью
SYMMETRY_RTOL = 1e-10

# Подпространство без шума
MEMBERSHIP_TOL = 1e-8
UNIT_NORM_TOL = 1e-10
CLAMP_RTOL = 1e-10

# Выборка измерений
TRAPEZOID_PANELS = 4096
KERNEL_SERIES_CUTOFF = 1e-4
OVERFLOW_CUTOFF = 1e-15     # 1/(δn) ниже порога: ϱ неотличимо от 1
LIMIT_MARKER = "limit"

# Монте-Карло
MC_CLAMP_RTOL = 1e-12
MC_MIN_TRIALS = 100
MC_PASS_THRESHOLD = 4.0     # в стандартных ошибках
MC_ZERO_VARIANCE_TOL = 1e-20

# Форматирование
SIGNIFICANT_DIGITS = 17
FLOAT_FORMAT = "%.17g"

# Рисунки
FIG1_SIGMA1 = 1.0
FIG1_SIGMA2_VALUES = (0.5, 0.75, 0.95, 1.0, 1.05, 1.25, 1.5)
FIG1_RHO_POINTS = 201
FIG3_ALPHA = 1.0
FIG5_ALPHA = 0.0
FIG35_N_VALUES = (2, 7)
FIG35_DELTA_MIN = 0.01
FIG35_DELTA_MAX = 10.0
FIG35_DELTA_POINTS = 200
FIG4_ALPHA = 1.0
FIG4_DELTA_VALUES = (0.0, 0.2, 0.5, 1.0)
FIG4_N_MAX = 200

MANIFEST_SUFFIX = ".manifest.json"
