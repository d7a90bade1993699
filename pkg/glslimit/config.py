from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
import os

from . import constants


BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")


@dataclass
class ToleranceConfig:
    psd_floor: float = constants.PSD_FLOOR
    sign_threshold: float = constants.SIGN_THRESHOLD
    conditioning_floor: float = constants.CONDITIONING_FLOOR
    rank_rtol: float = constants.RANK_RTOL
    membership_tol: float = constants.MEMBERSHIP_TOL
    tie_gap: float = constants.TIE_GAP
    clamp_rtol: float = constants.MC_CLAMP_RTOL


@dataclass
class DatabaseConfig:
    url: Optional[str]


@dataclass
class LoggingConfig:
    level: str
    directory: Path


@dataclass
class Settings:
    tolerances: ToleranceConfig
    db: DatabaseConfig
    logging: LoggingConfig


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError:
        raise RuntimeError(f"{name} должно быть числом, получено {raw!r}")


def load_settings() -> Settings:
    tolerances = ToleranceConfig(
        psd_floor=_env_float("GLSLIMIT_PSD_FLOOR", constants.PSD_FLOOR),
        sign_threshold=_env_float("GLSLIMIT_SIGN_THRESHOLD", constants.SIGN_THRESHOLD),
        conditioning_floor=_env_float(
            "GLSLIMIT_CONDITIONING_FLOOR", constants.CONDITIONING_FLOOR
        ),
        rank_rtol=_env_float("GLSLIMIT_RANK_RTOL", constants.RANK_RTOL),
        membership_tol=_env_float("GLSLIMIT_MEMBERSHIP_TOL", constants.MEMBERSHIP_TOL),
        tie_gap=_env_float("GLSLIMIT_TIE_GAP", constants.TIE_GAP),
        clamp_rtol=_env_float("GLSLIMIT_CLAMP_RTOL", constants.MC_CLAMP_RTOL),
    )

    # Пустая строка отключает журнал запусков
    db_url = os.getenv("GLSLIMIT_DATABASE_URL", f"sqlite:///{BASE_DIR / 'runs.sqlite3'}")

    return Settings(
        tolerances=tolerances,
        db=DatabaseConfig(url=db_url or None),
        logging=LoggingConfig(
            level=os.getenv("GLSLIMIT_LOG_LEVEL", "INFO"),
            directory=Path(os.getenv("GLSLIMIT_LOG_DIR", str(BASE_DIR / "logs"))),
        ),
    )
