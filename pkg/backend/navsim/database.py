"""Database configuration and models for the episode results ledger."""

from datetime import datetime
from typing import Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

DEFAULT_DATABASE_URL = "sqlite:///./navsim_results.db"

Base = declarative_base()


class EpisodeResult(Base):
    """One evaluated episode."""

    __tablename__ = "episode_results"

    id = Column(Integer, primary_key=True, index=True)
    timestamp = Column(DateTime, default=datetime.utcnow, nullable=False, index=True)

    # Run details
    run_id = Column(String(64), nullable=False, index=True)
    scenario = Column(String(100), nullable=False, index=True)
    episode_index = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    policy = Column(String(20), nullable=False)  # 'hrl' or 'flat'

    # Outcome
    success = Column(Integer, nullable=False, default=0)  # 1 = success, 0 = failure
    collision_count = Column(Integer, nullable=False, default=0)
    path_length = Column(Float, nullable=False)
    duration = Column(Float, nullable=False)

    # Oracle denominators, null when the goal was unreachable
    optimal_dist = Column(Float, nullable=True)
    optimal_time = Column(Float, nullable=True)

    config_hash = Column(String(64), nullable=False)

    def __repr__(self):
        return (f"<EpisodeResult(id={self.id}, run={self.run_id}, scenario={self.scenario}, "
                f"episode={self.episode_index}, success={self.success})>")


def make_engine(url: Optional[str] = None) -> Engine:
    url = url or DEFAULT_DATABASE_URL
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, echo=False, connect_args=connect_args)


def init_db(engine: Engine) -> None:
    """Initialize database tables."""
    Base.metadata.create_all(engine)


def make_session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(bind=engine, class_=Session, expire_on_commit=False)
