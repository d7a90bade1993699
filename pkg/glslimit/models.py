from datetime import datetime, timezone
from typing import Any

from sqlalchemy import JSON, DateTime, String
from sqlalchemy.orm import Mapped, mapped_column

from .db import Base


def utc_now() -> datetime:
    """Возвращает текущее время в UTC."""
    return datetime.now(timezone.utc)


class RunRecord(Base):
    __tablename__ = "runs"

    command: Mapped[str] = mapped_column(String(32), index=True)  # fig1/fig3/…/mc-validate
    parameters: Mapped[dict[str, Any]] = mapped_column(JSON)
    argv: Mapped[list[str]] = mapped_column(JSON)
    input_digests: Mapped[dict[str, str]] = mapped_column(JSON)
    outputs: Mapped[list[str]] = mapped_column(JSON)
    version: Mapped[str] = mapped_column(String(16))
    exit_code: Mapped[int] = mapped_column(default=0)
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True), default=utc_now, index=True
    )
