import logging
from datetime import date, datetime
from typing import Optional

import numpy as np

from app.db.database import SessionLocal
from app.db.models import ExperimentResult, ExperimentRun

logger = logging.getLogger(__name__)


def clean_nans(d):
    """Make a result JSON safe: NaN/inf become None, numpy values become Python ones."""
    if isinstance(d, np.ndarray):
        return clean_nans(d.tolist())
    if isinstance(d, np.generic):
        d = d.item()
    if isinstance(d, float) and (d != d or d == float('inf') or d == float('-inf')):
        return None
    if isinstance(d, dict):
        return {str(k): clean_nans(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [clean_nans(v) for v in d]
    if isinstance(d, (datetime, date)):
        return d.isoformat()
    return d


def create_experiment_run(experiment: str, config: dict) -> int:
    """Create a new experiment run record and return its ID."""
    db = SessionLocal()
    try:
        run = ExperimentRun(experiment=experiment, config=clean_nans(config), status="running")
        db.add(run)
        db.commit()
        db.refresh(run)
        logger.info(f"Created experiment run {run.id} ({experiment})")
        return run.id
    finally:
        db.close()


def update_experiment_run_status(run_id: int, status: str):
    """Update the status of an experiment run."""
    db = SessionLocal()
    try:
        run = db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()
        if run:
            run.status = status
            db.commit()
    finally:
        db.close()


def save_experiment_result(run_id: int, result_type: str, data: dict, epsilon: Optional[float] = None):
    """Save one result row; an existing row with the same run/type/epsilon is replaced."""
    db = SessionLocal()
    try:
        clean_data = clean_nans(data)

        query = db.query(ExperimentResult).filter(
            ExperimentResult.run_id == run_id,
            ExperimentResult.result_type == result_type,
        )
        if epsilon is None:
            query = query.filter(ExperimentResult.epsilon.is_(None))
        else:
            query = query.filter(ExperimentResult.epsilon == float(epsilon))
        query.delete()

        result = ExperimentResult(
            run_id=run_id,
            epsilon=None if epsilon is None else float(epsilon),
            result_type=result_type,
            data=clean_data,
        )
        db.add(result)
        db.commit()
    except Exception as e:
        db.rollback()
        logger.error(f"Error saving experiment result {result_type} for run {run_id}: {e}")
    finally:
        db.close()


def load_experiment_results(run_id: int, result_type: Optional[str] = None) -> list:
    """Stored result rows of a run as plain dicts, ordered by epsilon descending."""
    db = SessionLocal()
    try:
        query = db.query(ExperimentResult).filter(ExperimentResult.run_id == run_id)
        if result_type is not None:
            query = query.filter(ExperimentResult.result_type == result_type)
        rows = query.order_by(ExperimentResult.epsilon.desc()).all()
        return [{"epsilon": r.epsilon, "result_type": r.result_type, "data": r.data} for r in rows]
    finally:
        db.close()
