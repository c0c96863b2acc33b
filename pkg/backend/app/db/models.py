from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, JSON, String
from sqlalchemy.orm import relationship

from .database import Base


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    timestamp = Column(DateTime, default=datetime.utcnow)
    experiment = Column(String, index=True)
    config = Column(JSON)
    status = Column(String, default="pending")  # pending, running, completed, failed

    results = relationship("ExperimentResult", back_populates="run", cascade="all, delete-orphan")


class ExperimentResult(Base):
    __tablename__ = "experiment_results"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), index=True)
    epsilon = Column(Float, index=True, nullable=True)
    result_type = Column(String, index=True)  # e.g. 'scaling_row', 'counterexample', 'scaling_summary'

    # Row contents differ per experiment, so they live in one JSON column
    data = Column(JSON)

    run = relationship("ExperimentRun", back_populates="results")
