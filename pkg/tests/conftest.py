import json
from pathlib import Path
from typing import Callable

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    """Логи во временный каталог, журнал запусков выключен."""
    monkeypatch.setenv("GLSLIMIT_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("GLSLIMIT_DATABASE_URL", "")
    monkeypatch.setenv("GLSLIMIT_LOG_LEVEL", "WARNING")
    for name in (
        "GLSLIMIT_PSD_FLOOR",
        "GLSLIMIT_SIGN_THRESHOLD",
        "GLSLIMIT_CONDITIONING_FLOOR",
        "GLSLIMIT_RANK_RTOL",
        "GLSLIMIT_MEMBERSHIP_TOL",
        "GLSLIMIT_TIE_GAP",
        "GLSLIMIT_CLAMP_RTOL",
    ):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def two_point_sigma() -> Callable[[float, float, float], np.ndarray]:
    def build(sigma1: float, sigma2: float, rho: float) -> np.ndarray:
        off = rho * sigma1 * sigma2
        return np.array([[sigma1**2, off], [off, sigma2**2]])

    return build


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def write_problem(tmp_path) -> Callable[..., Path]:
    def write(payload, name: str = "problem.json") -> Path:
        path = tmp_path / name
        text = payload if isinstance(payload, str) else json.dumps(payload)
        path.write_text(text, encoding="utf-8")
        return path

    return write
