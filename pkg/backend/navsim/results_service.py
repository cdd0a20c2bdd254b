"""Service layer for the episode results ledger."""

import logging
from datetime import datetime
from typing import List, Optional

from sqlalchemy import desc, func, select
from sqlalchemy.orm import Session

from .database import EpisodeResult
from .metrics import EpisodeLog
from .models import EpisodeResultRecord, LedgerReport, RunStats, ScenarioStats

logger = logging.getLogger(__name__)


def save_episode_result(session: Session, run_id: str, log: EpisodeLog, config_hash: str) -> EpisodeResult:
    """
    Save one evaluated episode to the ledger.

    Args:
        session: Database session
        run_id: Identifier shared by every episode of a run
        log: Finalized episode
        config_hash: Hash of the resolved configuration

    Returns:
        Created EpisodeResult record
    """
    record = EpisodeResult(
        timestamp=datetime.utcnow(),
        run_id=run_id,
        scenario=log.scenario,
        episode_index=log.episode_index,
        seed=log.seed,
        policy=log.policy,
        success=1 if log.success else 0,
        collision_count=log.collision_count,
        path_length=log.path_length,
        duration=log.duration,
        optimal_dist=log.optimal_dist,
        optimal_time=log.optimal_time,
        config_hash=config_hash,
    )
    session.add(record)
    session.commit()
    session.refresh(record)
    return record


def get_episode_history(
    session: Session,
    limit: Optional[int] = 100,
    offset: int = 0,
    run_id: Optional[str] = None,
    scenario: Optional[str] = None,
    policy: Optional[str] = None,
) -> List[EpisodeResult]:
    """
    Retrieve ledger rows with optional filters, newest first.

    Args:
        session: Database session
        limit: Maximum number of records to return
        offset: Number of records to skip
        run_id: Filter by run
        scenario: Filter by scenario name
        policy: Filter by policy ('hrl' or 'flat')

    Returns:
        List of EpisodeResult records
    """
    query = select(EpisodeResult).order_by(desc(EpisodeResult.timestamp), desc(EpisodeResult.id))

    # Apply filters
    query = _filtered(query, run_id, scenario, policy)

    # Apply pagination
    if limit:
        query = query.limit(limit)
    query = query.offset(offset)

    return list(session.execute(query).scalars().all())


def get_run_stats(
    session: Session,
    run_id: Optional[str] = None,
    scenario: Optional[str] = None,
    policy: Optional[str] = None,
) -> RunStats:
    """
    Aggregated ledger statistics.

    Args:
        session: Database session
        run_id: Restrict to one run
        scenario: Restrict to one scenario
        policy: Restrict to one policy

    Returns:
        RunStats with episode counts, collision total and mean path length
    """
    query = select(
        func.count(EpisodeResult.id).label("total_episodes"),
        func.sum(EpisodeResult.success).label("successful_episodes"),
        func.sum(EpisodeResult.collision_count).label("total_collisions"),
        func.avg(EpisodeResult.path_length).label("mean_path_length"),
    )
    query = _filtered(query, run_id, scenario, policy)

    row = session.execute(query).first()
    total, successful = row.total_episodes or 0, row.successful_episodes or 0
    return RunStats(
        total_episodes=total,
        successful_episodes=successful,
        failed_episodes=total - successful,
        total_collisions=row.total_collisions or 0,
        mean_path_length=round(row.mean_path_length or 0.0, 4),
    )


def get_stats_by_scenario(
    session: Session,
    run_id: Optional[str] = None,
    policy: Optional[str] = None,
) -> List[ScenarioStats]:
    """Ledger statistics grouped by scenario."""
    query = select(
        EpisodeResult.scenario,
        func.count(EpisodeResult.id).label("total_episodes"),
        func.sum(EpisodeResult.success).label("successful_episodes"),
        func.sum(EpisodeResult.collision_count).label("total_collisions"),
    ).group_by(EpisodeResult.scenario).order_by(EpisodeResult.scenario)
    query = _filtered(query, run_id, None, policy)

    return [
        ScenarioStats(
            scenario=row.scenario,
            total_episodes=row.total_episodes or 0,
            successful_episodes=row.successful_episodes or 0,
            total_collisions=row.total_collisions or 0,
        )
        for row in session.execute(query).all()
    ]


def get_ledger_report(
    session: Session,
    run_id: Optional[str] = None,
    scenario: Optional[str] = None,
    policy: Optional[str] = None,
    limit: int = 20,
) -> LedgerReport:
    """
    Totals, per-scenario breakdown and the most recent rows for one filter set.

    Args:
        session: Database session
        run_id: Restrict to one run
        scenario: Restrict to one scenario
        policy: Restrict to one policy
        limit: Number of recent episodes to include

    Returns:
        LedgerReport
    """
    scenarios = get_stats_by_scenario(session, run_id, policy)
    if scenario:
        scenarios = [s for s in scenarios if s.scenario == scenario]
    recent = get_episode_history(session, limit=limit, run_id=run_id, scenario=scenario, policy=policy)
    return LedgerReport(
        run_id=run_id,
        scenario=scenario,
        policy=policy,
        stats=get_run_stats(session, run_id, scenario, policy),
        scenarios=scenarios,
        recent=[EpisodeResultRecord.model_validate(r) for r in recent],
    )


def _filtered(query, run_id: Optional[str], scenario: Optional[str], policy: Optional[str]):
    if run_id:
        query = query.where(EpisodeResult.run_id == run_id)
    if scenario:
        query = query.where(EpisodeResult.scenario == scenario)
    if policy:
        query = query.where(EpisodeResult.policy == policy)
    return query
