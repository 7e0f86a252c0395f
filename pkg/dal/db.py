from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from sqlalchemy import Engine, create_engine, event, text
from sqlalchemy.orm import Session, sessionmaker

import config

_engine: Engine | None = None
_SessionLocal: sessionmaker | None = None


def _set_sqlite_pragma(dbapi_connection, connection_record):
    # Enable FK enforcement in SQLite
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA foreign_keys = ON;")
    cursor.execute("PRAGMA journal_mode = WAL;")
    cursor.execute("PRAGMA synchronous = NORMAL;")
    cursor.close()


def make_engine(url: str) -> Engine:
    if url.startswith("sqlite:///") and ":memory:" not in url:
        Path(url.removeprefix("sqlite:///")).parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(url, echo=False, future=True)
    if engine.dialect.name == "sqlite":
        event.listen(engine, "connect", _set_sqlite_pragma)
    return engine


def get_engine() -> Engine:
    """Process-wide engine for RESULTS_DB_URL, created on first use."""
    global _engine, _SessionLocal
    if _engine is None:
        _engine = make_engine(config.RESULTS_DB_URL)
        _SessionLocal = sessionmaker(bind=_engine, autoflush=False, expire_on_commit=False, future=True)
    return _engine


@contextmanager
def get_session() -> Iterator[Session]:
    get_engine()
    session: Session = _SessionLocal()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()


def run_ddl(sql: str, engine: Engine | None = None) -> None:
    # Helper for triggers / indexes (SQLite DDL)
    with (engine or get_engine()).begin() as conn:
        conn.execute(text(sql))
