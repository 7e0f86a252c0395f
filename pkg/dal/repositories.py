from __future__ import annotations

from collections.abc import Mapping

from sqlalchemy import Integer, cast, desc, func, select
from sqlalchemy.orm import Session

from dal.models import ExperimentRun, RunMetric


# --- Runs ---
def record_run(
    session: Session,
    experiment: str,
    seed: int,
    config_digest: str,
    passed: bool,
    exit_code: int,
    summary_path: str | None = None,
    metrics: Mapping[str, float] | None = None,
) -> ExperimentRun:
    run = ExperimentRun(
        experiment=experiment,
        seed=str(seed),
        config_digest=config_digest,
        passed=passed,
        exit_code=exit_code,
        summary_path=summary_path,
    )
    session.add(run)
    session.flush()
    for name, value in sorted((metrics or {}).items()):
        session.add(RunMetric(run_id=run.run_id, name=name, value=float(value)))
    session.flush()
    return run


def list_runs(session: Session, experiment: str | None = None, limit: int = 20) -> list[ExperimentRun]:
    stmt = select(ExperimentRun).order_by(desc(ExperimentRun.created_at), desc(ExperimentRun.run_id)).limit(limit)
    if experiment:
        stmt = stmt.where(ExperimentRun.experiment == experiment)
    return list(session.execute(stmt).scalars())


def metrics_for_run(session: Session, run_id: int) -> dict[str, float]:
    stmt = select(RunMetric.name, RunMetric.value).where(RunMetric.run_id == run_id).order_by(RunMetric.name)
    return {name: value for name, value in session.execute(stmt).all()}


# --- Analytics ---
def pass_rate_by_experiment(session: Session):
    stmt = (
        select(
            ExperimentRun.experiment,
            func.count(ExperimentRun.run_id).label("runs"),
            func.sum(cast(ExperimentRun.passed, Integer)).label("passed"),
        )
        .group_by(ExperimentRun.experiment)
        .order_by(ExperimentRun.experiment)
    )
    return session.execute(stmt).all()


def runs_with_digest(session: Session, digest_prefix: str) -> list[ExperimentRun]:
    """Runs whose config digest starts with `digest_prefix`, oldest first."""
    stmt = (
        select(ExperimentRun)
        .where(ExperimentRun.config_digest.startswith(digest_prefix.lower(), autoescape=True))
        .order_by(ExperimentRun.created_at, ExperimentRun.run_id)
    )
    return list(session.execute(stmt).scalars())
