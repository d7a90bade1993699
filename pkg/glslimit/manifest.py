"""Манифест запуска: чем и из чего получен каждый выходной файл."""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from . import __version__, constants
from .db import configure, get_session, init_db
from .logging_config import get_logger
from .models import RunRecord, utc_now
from .validators import ProblemFileError

logger = get_logger(__name__)


@dataclass
class RunManifest:
    command: str
    parameters: dict[str, Any]
    argv: list[str]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    exit_code: int = 0
    created_at: str = field(default_factory=lambda: utc_now().isoformat())

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        missing = [name for name in ("command", "parameters", "argv") if name not in data]
        if missing:
            raise ProblemFileError("обязательное поле отсутствует", field=missing[0])
        known = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        return cls(**known)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ProblemFileError(f"не удалось прочитать {path}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ProblemFileError(f"некорректный JSON: {e.msg}", line=e.lineno) from e
        if not isinstance(data, dict):
            raise ProblemFileError("ожидался JSON-объект верхнего уровня")
        return cls.from_dict(data)


def file_digest(path: Union[str, Path]) -> str:
    """sha256 содержимого файла."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_path(output: Union[str, Path]) -> Path:
    output = Path(output)
    return output.with_name(output.name + constants.MANIFEST_SUFFIX)


def record_run(manifest: RunManifest, database_url: Optional[str]) -> Optional[int]:
    """
    Сохранить запуск в журнал.

    Returns:
        id записи или None, если журнал отключён
    """
    if not database_url:
        return None
    configure(database_url)
    init_db()
    with get_session() as session:
        record = RunRecord(
            command=manifest.command,
            parameters=manifest.parameters,
            argv=manifest.argv,
            input_digests=manifest.inputs,
            outputs=manifest.outputs,
            version=manifest.version,
            exit_code=manifest.exit_code,
        )
        session.add(record)
        session.commit()
        logger.debug(f"Запуск {manifest.command} записан в журнал, id = {record.id}")
        return record.id
