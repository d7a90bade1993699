"""
Файлы задач и форматы вывода.

Файл задачи (JSON):

    {
      "design": [[1], [1]],
      "y": [1.2, 0.9],
      "sigma": [1.0, 0.5],
      "correlation": [[1, 0.8], [0.8, 1]],
      "beta_true": [0.0],
      "expected_covariance": [[0.2]]
    }

correlation может быть вложенным массивом или моделью:
{"model": "ar1", "rho": …}, {"model": "exp", "delta": …, "locations": […]},
{"model": "rank_one", "signs": […]}, {"model": "block", "blocks": [<модель>, …]}.
Вместо sigma/correlation допускается полное поле "covariance".
"""

import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from . import constants
from .constants import CorrelationModelKind
from .correlation import (
    CorrelationMatrix,
    CovarianceModel,
    SignVector,
    ar1_correlation,
    assemble_covariance,
    block_correlation,
    decompose_covariance,
    exponential_correlation,
    rank_one_limit,
)
from .design import DesignMatrix
from .logging_config import get_logger
from .validators import GlsLimitError, ProblemFileError, ValidationError, validate_finite_array

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class ParsedCorrelation:
    """Разобранное поле correlation: матрица и то, что известно о её пределе."""

    matrix: CorrelationMatrix
    signs: Optional[SignVector] = None
    limit_rank: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Problem:
    design: DesignMatrix
    y: Optional[np.ndarray]
    covariance: np.ndarray
    deviations: np.ndarray
    correlation: CorrelationMatrix
    signs: Optional[SignVector] = None
    covariance_limit_rank: Optional[int] = None
    beta_true: Optional[np.ndarray] = None
    expected_covariance: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def m(self) -> int:
        return self.design.m


def _array(data: dict[str, Any], name: str, ndim: Optional[int] = None) -> np.ndarray:
    if name not in data:
        raise ProblemFileError("обязательное поле отсутствует", field=name)
    try:
        return validate_finite_array(data[name], name, ndim=ndim)
    except ValidationError as e:
        raise ProblemFileError(str(e), field=name) from e


def _optional_array(data: dict[str, Any], name: str, ndim: int) -> Optional[np.ndarray]:
    if data.get(name) is None:
        return None
    return _array(data, name, ndim)


def _number(model: dict[str, Any], key: str, field: str) -> float:
    value = model.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFileError(f"ожидалось число в '{key}'", field=field)
    return float(value)


def _parse_correlation(
    raw: Any,
    n: Optional[int],
    field: str = "correlation",
    psd_floor: float = constants.PSD_FLOOR,
) -> ParsedCorrelation:
    if isinstance(raw, list):
        try:
            return ParsedCorrelation(matrix=CorrelationMatrix.from_array(raw, psd_floor=psd_floor))
        except GlsLimitError as e:
            raise ProblemFileError(str(e), field=field) from e
    if not isinstance(raw, dict) or "model" not in raw:
        raise ProblemFileError("ожидалась матрица или объект с полем 'model'", field=field)

    try:
        kind = CorrelationModelKind(raw["model"])
    except ValueError:
        known = ", ".join(k.value for k in CorrelationModelKind)
        raise ProblemFileError(f"неизвестная модель {raw['model']!r}, допустимы: {known}", field=field)

    try:
        if kind == CorrelationModelKind.AR1:
            # Вне блока размер берётся из design
            size = raw.get("n", n)
            if not isinstance(size, int) or isinstance(size, bool):
                raise ProblemFileError("модели ar1 нужно целое 'n'", field=field)
            return ParsedCorrelation(matrix=ar1_correlation(size, _number(raw, "rho", field)))
        if kind == CorrelationModelKind.EXPONENTIAL:
            if "locations" not in raw:
                raise ProblemFileError("модели exp нужно поле 'locations'", field=field)
            return ParsedCorrelation(matrix=exponential_correlation(raw["locations"], _number(raw, "delta", field)))
        if kind == CorrelationModelKind.RANK_ONE:
            signs = SignVector.from_sequence(raw.get("signs", []))
            return ParsedCorrelation(matrix=rank_one_limit(signs), signs=signs, limit_rank=1)

        blocks = raw.get("blocks")
        if not isinstance(blocks, list) or not blocks:
            raise ProblemFileError("модели block нужен непустой список 'blocks'", field=field)
        parsed = [
            _parse_correlation(block, None, f"{field}.blocks[{i}]", psd_floor) for i, block in enumerate(blocks)
        ]
        matrix = block_correlation([block.matrix for block in parsed])
        signs = None
        limit_rank = None
        # Знаки и ранг предела известны, только если все блоки одноранговые
        if all(block.signs is not None for block in parsed):
            signs = SignVector.from_sequence(np.concatenate([block.signs.entries for block in parsed]))
            limit_rank = sum(block.limit_rank for block in parsed)
        return ParsedCorrelation(matrix=matrix, signs=signs, limit_rank=limit_rank)
    except ProblemFileError:
        raise
    except GlsLimitError as e:
        raise ProblemFileError(str(e), field=field) from e


def _field_line(text: str, field: str) -> Optional[int]:
    """Строка, где впервые встречается ключ верхнего уровня поля."""
    key = re.split(r"[.\[]", field, maxsplit=1)[0]
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return lineno
    return None


def parse_problem(
    text: str,
    psd_floor: float = constants.PSD_FLOOR,
    rank_rtol: float = constants.RANK_RTOL,
) -> Problem:
    """
    Разбор и проверка файла задачи.

    Args:
        text: Содержимое JSON
        psd_floor: Допуск на отрицательные собственные значения ϱ
        rank_rtol: Относительный порог численного ранга X

    Raises:
        ProblemFileError: Синтаксическая ошибка (со строкой) или
            неверное поле (с его именем и строкой, где оно задано)
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"некорректный JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise ProblemFileError("ожидался JSON-объект верхнего уровня")

    try:
        return _problem_from_data(data, psd_floor, rank_rtol)
    except ProblemFileError as e:
        if e.field is None or e.line is not None:
            raise
        line = _field_line(text, e.field)
        if line is None:
            raise
        raise ProblemFileError(e.detail, field=e.field, line=line) from e


def _problem_from_data(data: dict[str, Any], psd_floor: float, rank_rtol: float) -> Problem:
    try:
        design = DesignMatrix.from_array(_array(data, "design"), rank_rtol=rank_rtol)
    except ProblemFileError:
        raise
    except ValidationError as e:
        raise ProblemFileError(str(e), field="design") from e
    n = design.n

    y = _optional_array(data, "y", ndim=1)
    if y is not None and y.shape[0] != n:
        raise ProblemFileError(f"ожидалась длина {n}, получено {y.shape[0]}", field="y")

    signs: Optional[SignVector] = None
    limit_rank: Optional[int] = None
    if data.get("covariance") is not None:
        covariance = _array(data, "covariance", ndim=2)
        if covariance.shape != (n, n):
            raise ProblemFileError(f"ожидалась форма ({n}, {n}), получено {covariance.shape}", field="covariance")
        try:
            deviations, correlation = decompose_covariance(covariance, psd_floor=psd_floor)
        except GlsLimitError as e:
            raise ProblemFileError(str(e), field="covariance") from e
    else:
        sigma = _array(data, "sigma", ndim=1)
        if "correlation" not in data:
            raise ProblemFileError("нужно поле correlation или covariance", field="correlation")
        parsed = _parse_correlation(data["correlation"], n, psd_floor=psd_floor)
        if parsed.matrix.n != n:
            raise ProblemFileError(f"ожидался размер {n}, получено {parsed.matrix.n}", field="correlation")
        try:
            model = CovarianceModel(deviations=sigma, correlation=parsed.matrix)
        except ValidationError as e:
            raise ProblemFileError(str(e), field="sigma") from e
        covariance = np.array(assemble_covariance(model))
        deviations, correlation = model.deviations, parsed.matrix
        signs, limit_rank = parsed.signs, parsed.limit_rank

    beta_true = _optional_array(data, "beta_true", ndim=1)
    if beta_true is not None and beta_true.shape[0] != design.m:
        raise ProblemFileError(f"ожидалась длина {design.m}", field="beta_true")
    expected = _optional_array(data, "expected_covariance", ndim=2)
    if expected is not None and expected.shape != (design.m, design.m):
        raise ProblemFileError(f"ожидалась форма ({design.m}, {design.m})", field="expected_covariance")

    logger.debug(f"Задача разобрана: n = {n}, m = {design.m}")
    return Problem(
        design=design,
        y=y,
        covariance=covariance,
        deviations=deviations,
        correlation=correlation,
        signs=signs,
        covariance_limit_rank=limit_rank,
        beta_true=beta_true,
        expected_covariance=expected,
    )


def load_problem(
    path: Union[str, Path],
    psd_floor: float = constants.PSD_FLOOR,
    rank_rtol: float = constants.RANK_RTOL,
) -> Problem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemFileError(f"не удалось прочитать {path}: {e.strerror}") from e
    return parse_problem(text, psd_floor, rank_rtol)


def correlation_to_json(R: CorrelationMatrix) -> str:
    return json.dumps({"n": R.n, "matrix": R.values.tolist()})


def correlation_from_json(text: str) -> CorrelationMatrix:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"некорректный JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict) or "matrix" not in data:
        raise ProblemFileError("обязательное поле отсутствует", field="matrix")
    matrix = CorrelationMatrix.from_array(data["matrix"])
    if data.get("n") is not None and data["n"] != matrix.n:
        raise ProblemFileError(f"n = {data['n']} не совпадает с размером матрицы {matrix.n}", field="n")
    return matrix


def matrix_to_csv(matrix: ArrayLike) -> str:
    """Матрица без заголовка, 17 значащих цифр."""
    frame = pd.DataFrame(np.atleast_2d(np.asarray(matrix, dtype=float)))
    return frame.to_csv(index=False, header=False, float_format=constants.FLOAT_FORMAT, lineterminator="\n")


def matrix_from_csv(text: str) -> np.ndarray:
    try:
        frame = pd.read_csv(io.StringIO(text), header=None, dtype=float, float_precision="round_trip")
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"Некорректный CSV: {e}") from e
    return validate_finite_array(frame.to_numpy(), "matrix", ndim=2)


def curve_to_csv(table: pd.DataFrame) -> str:
    """Первый столбец содержит ось (delta, rho или n), далее по столбцу на серию."""
    return table.to_csv(index=False, float_format=constants.FLOAT_FORMAT, lineterminator="\n")


def curve_to_json(table: pd.DataFrame) -> str:
    axis = table.columns[0]
    payload = {
        "axis": axis,
        "values": table[axis].tolist(),
        "series": [{"name": name, "values": table[name].tolist()} for name in table.columns[1:]],
    }
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def report_to_json(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"
