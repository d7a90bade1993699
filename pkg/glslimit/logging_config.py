"""Настройка логирования для инструментария."""

import logging
import sys
from pathlib import Path
from typing import Optional

# Директория для логов по умолчанию
LOG_DIR = Path(__file__).parent.parent / "logs"

# Формат логов
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: str = "INFO", log_dir: Optional[Path] = None) -> None:
    """
    Настраивает логирование для приложения.

    Args:
        level: Уровень логирования (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Директория для файла лога (по умолчанию ``logs/``)
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    directory = log_dir or LOG_DIR
    directory.mkdir(parents=True, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Повторный вызов не должен дублировать handlers
    root_logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT, DATE_FORMAT)

    # Данные идут в stdout, поэтому консольный лог пишем в stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    file_handler = logging.FileHandler(
        directory / "glslimit.log",
        encoding="utf-8"
    )
    file_handler.setLevel(log_level)
    file_handler.setFormatter(formatter)
    root_logger.addHandler(file_handler)

    # RuntimeWarning от numpy/scipy попадают в тот же лог
    logging.captureWarnings(True)

    # Отключаем избыточное логирование от сторонних библиотек
    logging.getLogger("sqlalchemy").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Logger модуля; обработчики задаёт setup_logging."""
    return logging.getLogger(name)
