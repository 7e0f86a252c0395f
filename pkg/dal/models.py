from __future__ import annotations

from datetime import datetime

from sqlalchemy import (
    Boolean,
    CheckConstraint,
    DateTime,
    Float,
    ForeignKey,
    Index,
    Integer,
    String,
    Text,
    UniqueConstraint,
)
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


class Base(DeclarativeBase):
    pass


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    run_id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    experiment: Mapped[str] = mapped_column(String(40), nullable=False)
    seed: Mapped[str] = mapped_column(String(20), nullable=False)  # u64 does not fit SQLite INTEGER
    config_digest: Mapped[str] = mapped_column(String(64), nullable=False)
    passed: Mapped[bool] = mapped_column(Boolean, nullable=False)
    exit_code: Mapped[int] = mapped_column(Integer, nullable=False)
    summary_path: Mapped[str | None] = mapped_column(Text)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow, nullable=False)

    metrics = relationship("RunMetric", back_populates="run", cascade="all, delete-orphan")

    __table_args__ = (
        CheckConstraint("exit_code BETWEEN 0 AND 3", name="ck_run_exit_code"),
        Index("ix_runs_experiment_created", "experiment", "created_at"),
    )


class RunMetric(Base):
    __tablename__ = "run_metrics"

    metric_id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("experiment_runs.run_id", ondelete="CASCADE"), nullable=False)
    name: Mapped[str] = mapped_column(String(120), nullable=False)
    value: Mapped[float] = mapped_column(Float, nullable=False)

    run = relationship("ExperimentRun", back_populates="metrics")

    __table_args__ = (
        UniqueConstraint("run_id", "name", name="uq_metric_per_run"),
        Index("ix_metrics_run", "run_id"),
    )
