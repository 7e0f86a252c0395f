from __future__ import annotations

import logging

from sqlalchemy import Engine

from dal.db import get_engine, run_ddl
from dal.models import Base

logger = logging.getLogger(__name__)

TRIGGERS = (
    """
    CREATE TRIGGER IF NOT EXISTS trg_run_passed_matches_exit
    BEFORE INSERT ON experiment_runs
    FOR EACH ROW
    WHEN (NEW.passed = 1 AND NEW.exit_code != 0) OR (NEW.passed = 0 AND NEW.exit_code = 0)
    BEGIN
        SELECT RAISE(ABORT, 'passed flag disagrees with exit_code');
    END;
    """,
)


def create_database(engine: Engine | None = None) -> None:
    engine = engine or get_engine()
    Base.metadata.create_all(engine)
    if engine.dialect.name == "sqlite":
        for sql in TRIGGERS:
            run_ddl(sql, engine)
    logger.debug("run ledger ready at %s", engine.url)


if __name__ == "__main__":
    create_database()
