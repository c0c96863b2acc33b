import os

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

# Default ledger location: backend/data/db/experiments.db
DB_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "data", "db")
DEFAULT_DATABASE_URL = f"sqlite:///{DB_DIR}/experiments.db"

# Bound by init_db; worker processes never touch the ledger
SessionLocal = sessionmaker(autocommit=False, autoflush=False)

Base = declarative_base()


def database_url(path: str = None) -> str:
    """SQLite URL for a file path; a full URL is passed through unchanged."""
    if path is None:
        os.makedirs(DB_DIR, exist_ok=True)
        return DEFAULT_DATABASE_URL
    if "://" in path:
        return path
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    return f"sqlite:///{os.path.abspath(path)}"


def init_db(path: str = None):
    """Create the engine, the tables, and bind SessionLocal to it."""
    from app.db import models  # noqa: F401  (registers the tables)

    url = database_url(path)
    # check_same_thread=False lets the session be used from the pool's result thread
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, connect_args=connect_args)
    Base.metadata.create_all(bind=engine)
    SessionLocal.configure(bind=engine)
    return engine

