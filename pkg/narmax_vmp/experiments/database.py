"""
Database models for experiment results.
Stores every executed plan and its per-run records so sweeps can be queried
and re-aggregated without the CSV files.
"""

import json
import os
from datetime import datetime
from typing import List, Optional, Sequence

from sqlalchemy import (
    create_engine,
    Column,
    String,
    Integer,
    Float,
    DateTime,
    Boolean,
    Text,
    ForeignKey,
    Index,
)
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

from estimator.errors import ConfigurationError

from .harness import ExperimentPlan, RunRecord

Base = declarative_base()


class ExperimentRun(Base):
    """One execution of an experiment plan."""
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    mode = Column(String(20), nullable=False)  # 'sample_sweep' or 'noise_sweep'
    base_seed = Column(Integer, nullable=False)
    plan = Column(Text, nullable=False)  # plan JSON
    started_at = Column(DateTime, default=datetime.utcnow, nullable=False)

    # Relationships
    records = relationship("RunRecordRow", back_populates="experiment", cascade="all, delete-orphan")


class RunRecordRow(Base):
    """A single (sweep value, estimator, realization) outcome."""
    __tablename__ = "run_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    experiment_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)

    estimator = Column(String(10), nullable=False)
    sweep_value = Column(Float, nullable=False)
    realization = Column(Integer, nullable=False)
    rms_simulation = Column(Float, nullable=True)  # NULL when failed
    rms_prediction = Column(Float, nullable=True)
    failed = Column(Boolean, default=False, nullable=False)

    # Relationships
    experiment = relationship("ExperimentRun", back_populates="records")

    # Indexes
    __table_args__ = (
        Index("idx_record_experiment_id", "experiment_id"),
        Index("idx_record_estimator", "estimator"),
        Index("idx_record_sweep_value", "sweep_value"),
    )

    def to_record(self) -> RunRecord:
        return RunRecord(
            estimator=self.estimator,
            sweep_value=self.sweep_value,
            realization=self.realization,
            rms_simulation=float("nan") if self.rms_simulation is None else self.rms_simulation,
            rms_prediction=float("nan") if self.rms_prediction is None else self.rms_prediction,
            failed=self.failed,
        )


def _nullable(value: float) -> Optional[float]:
    return None if value != value else value


class ResultsDatabase:
    """Manages database connections and sessions for experiment results."""

    def __init__(self, database_url: Optional[str] = None, echo: Optional[bool] = None):
        """
        Initialize results database.

        Args:
            database_url: SQLAlchemy database URL. If None, uses RESULTS_DATABASE_URL env var.
            echo: Log SQL statements. If None, uses the SQL_ECHO env var.
        """
        if database_url is None:
            database_url = os.getenv("RESULTS_DATABASE_URL")

        if not database_url:
            raise ConfigurationError(
                "A results database URL is required: pass --db or set RESULTS_DATABASE_URL"
            )

        # Handle postgres:// to postgresql:// for SQLAlchemy 1.4+
        if database_url.startswith("postgres://"):
            database_url = database_url.replace("postgres://", "postgresql://", 1)

        if echo is None:
            echo = os.getenv("SQL_ECHO", "false").lower() == "true"

        self.engine = create_engine(
            database_url,
            echo=echo,
            pool_pre_ping=True,
        )

        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)

    def create_tables(self):
        """Create all database tables."""
        Base.metadata.create_all(bind=self.engine)

    def get_session(self):
        """Get a new database session."""
        return self.SessionLocal()

    def save_records(self, plan: ExperimentPlan, records: Sequence[RunRecord]) -> int:
        """
        Store a plan and its records in one transaction.

        Returns:
            The id of the new ExperimentRun
        """
        session = self.get_session()
        try:
            run = ExperimentRun(
                mode=plan.mode,
                base_seed=plan.base_seed,
                plan=json.dumps(plan.to_dict(), sort_keys=True),
            )
            run.records = [
                RunRecordRow(
                    estimator=r.estimator,
                    sweep_value=float(r.sweep_value),
                    realization=r.realization,
                    rms_simulation=_nullable(r.rms_simulation),
                    rms_prediction=_nullable(r.rms_prediction),
                    failed=bool(r.failed),
                )
                for r in records
            ]
            session.add(run)
            session.commit()
            return run.id
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def load_records(self, experiment_id: int) -> List[RunRecord]:
        """Records of one experiment in insertion order."""
        session = self.get_session()
        try:
            rows = (
                session.query(RunRecordRow)
                .filter(RunRecordRow.experiment_id == experiment_id)
                .order_by(RunRecordRow.id)
                .all()
            )
            return [row.to_record() for row in rows]
        finally:
            session.close()

    def load_plan(self, experiment_id: int) -> Optional[ExperimentPlan]:
        session = self.get_session()
        try:
            run = session.get(ExperimentRun, experiment_id)
            if run is None:
                return None
            return ExperimentPlan.from_dict(json.loads(run.plan))
        finally:
            session.close()
