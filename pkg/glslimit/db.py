from contextlib import contextmanager
from typing import Iterator, Optional

from sqlalchemy import Integer, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, sessionmaker


class Base(DeclarativeBase):
    """Base class for all ORM models."""

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)


engine: Optional[Engine] = None
SessionFactory: Optional[sessionmaker] = None


def configure(url: str) -> Engine:
    """Создать движок для указанного URL (пакетный CLI работает синхронно)."""
    global engine, SessionFactory
    if engine is not None and str(engine.url) == url:
        return engine
    if engine is not None:
        engine.dispose()
    engine = create_engine(url, echo=False, future=True)
    SessionFactory = sessionmaker(engine, expire_on_commit=False, class_=Session)
    return engine


@contextmanager
def get_session() -> Iterator[Session]:
    if SessionFactory is None:
        raise RuntimeError("База данных не настроена: вызовите configure()")
    with SessionFactory() as session:
        yield session


def init_db() -> None:
    """Создать таблицы, если их ещё нет (простая инициализация без Alembic)."""
    from . import models  # noqa: F401 - ensure models are imported

    if engine is None:
        raise RuntimeError("База данных не настроена: вызовите configure()")
    Base.metadata.create_all(engine)
