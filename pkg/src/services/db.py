from __future__ import annotations

from contextlib import contextmanager
from functools import lru_cache
from typing import Generator

from sqlalchemy import Engine, create_engine
from sqlalchemy.orm import Session, sessionmaker

from src.config import get_settings
from src.models.base import Base


class ResultsDatabaseDisabled(RuntimeError):
    """Raised when persistence is requested but RESULTS_DATABASE_URL is unset."""


def persistence_enabled() -> bool:
    return bool(get_settings().RESULTS_DATABASE_URL)


@lru_cache(maxsize=1)
def get_engine() -> Engine:
    url = get_settings().RESULTS_DATABASE_URL
    if not url:
        raise ResultsDatabaseDisabled("RESULTS_DATABASE_URL is not configured")
    return create_engine(url, future=True, echo=False)


@lru_cache(maxsize=1)
def _session_factory() -> sessionmaker:
    return sessionmaker(bind=get_engine(), autoflush=False, autocommit=False, future=True)


def init_db() -> None:
    # Import models so that SQLAlchemy registers all mappers before creating
    # tables. This ensures relationship dependencies resolve correctly.
    from src.models import experiment_run, run_record  # noqa: F401

    Base.metadata.create_all(bind=get_engine())


@contextmanager
def session_scope() -> Generator[Session, None, None]:
    session = _session_factory()()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()


def reset_engine() -> None:
    """Forget the cached engine (tests switch RESULTS_DATABASE_URL between cases)."""
    _session_factory.cache_clear()
    get_engine.cache_clear()
