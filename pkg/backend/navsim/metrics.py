"""
Episode logs and navigation metrics (SR, SRN, CT, SPL, SNT)
"""
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .models import MetricsReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepRecord:
    t: float
    x: float
    y: float
    heading: float
    v: float
    omega: float
    subgoal_x: float
    subgoal_y: float
    congestion: float
    d_u: float
    collision: bool


STEP_COLUMNS = [f.name for f in fields(StepRecord)]


@dataclass(frozen=True)
class EpisodeLog:
    scenario: str
    episode_index: int
    seed: int
    policy: str
    start: Tuple[float, float, float]
    goal: Tuple[float, float]
    steps: Tuple[StepRecord, ...]
    success: bool
    path_length: float
    duration: float
    optimal_dist: Optional[float]
    optimal_time: Optional[float]
    collision_count: int
    final_distance: float
    runtime_oracle_calls: int = 0

    @property
    def collision_free(self) -> bool:
        return self.collision_count == 0


def rising_edges(flags: Sequence[bool]) -> int:
    """Number of 0 -> 1 transitions, counting a contact at the first step"""
    count, prev = 0, False
    for f in flags:
        if f and not prev:
            count += 1
        prev = bool(f)
    return count


def polyline_length(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.hypot(*np.diff(points, axis=0).T).sum())


def finalize_episode(steps: Sequence[StepRecord], start: Sequence[float], goal: Sequence[float], dt: float,
                     optimal_dist: Optional[float], optimal_time: Optional[float], d_limit: float = 0.5,
                     scenario: str = "scenario", episode_index: int = 0, seed: int = 0, policy: str = "hrl",
                     runtime_oracle_calls: int = 0) -> EpisodeLog:
    """
    Close an episode: path length, duration, contact events and success

    An episode whose optimal distance is undefined (goal unreachable on the
    oracle grid) counts as failed.
    """
    points = np.array([[start[0], start[1]]] + [[s.x, s.y] for s in steps], dtype=float)
    final = points[-1]
    final_distance = math.hypot(goal[0] - final[0], goal[1] - final[1])
    success = final_distance < d_limit and optimal_dist is not None
    if optimal_dist is None:
        logger.warning(f"{scenario} episode {episode_index}: no optimal path, marked failed")
    return EpisodeLog(
        scenario=scenario,
        episode_index=episode_index,
        seed=seed,
        policy=policy,
        start=tuple(float(v) for v in start),
        goal=(float(goal[0]), float(goal[1])),
        steps=tuple(steps),
        success=bool(success),
        path_length=polyline_length(points),
        duration=len(steps) * dt,
        optimal_dist=optimal_dist,
        optimal_time=optimal_time,
        collision_count=rising_edges([s.collision for s in steps]),
        final_distance=final_distance,
        runtime_oracle_calls=runtime_oracle_calls,
    )


def _weighted_term(success: bool, actual: float, optimal: Optional[float]) -> float:
    if not success or optimal is None:
        return 0.0
    denom = max(actual, optimal)
    return 1.0 if denom == 0 else optimal / denom


def spl(episodes: Sequence[EpisodeLog]) -> float:
    """Success weighted by path length, in [0, 1]"""
    if not episodes:
        raise ValueError("spl needs at least one episode")
    return sum(_weighted_term(e.success, e.path_length, e.optimal_dist) for e in episodes) / len(episodes)


def snt(episodes: Sequence[EpisodeLog]) -> float:
    """Success weighted by navigation time, in [0, 1]"""
    if not episodes:
        raise ValueError("snt needs at least one episode")
    return sum(_weighted_term(e.success, e.duration, e.optimal_time) for e in episodes) / len(episodes)


def aggregate(episodes: Sequence[EpisodeLog], config_hash: str = "", scenario: Optional[str] = None,
              policy: Optional[str] = None) -> MetricsReport:
    if not episodes:
        raise ValueError("aggregate needs at least one episode")
    n = len(episodes)
    return MetricsReport(
        sr=100.0 * sum(e.success for e in episodes) / n,
        srn=100.0 * sum(e.success and e.collision_free for e in episodes) / n,
        ct=sum(e.collision_count for e in episodes) / n,
        spl=100.0 * spl(episodes),
        snt=100.0 * snt(episodes),
        n=n,
        config_hash=config_hash,
        scenario=scenario,
        policy=policy,
        runtime_oracle_calls=sum(e.runtime_oracle_calls for e in episodes),
    )


def episode_frame(log: EpisodeLog) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in log.steps], columns=STEP_COLUMNS)


def write_episode_csv(log: EpisodeLog, path: Union[str, Path]) -> Path:
    """One row per control step with the STEP_COLUMNS header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    episode_frame(log).to_csv(path, index=False)
    return path


def read_steps_csv(path: Union[str, Path]) -> List[StepRecord]:
    df = pd.read_csv(path)
    missing = [c for c in STEP_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path} is missing columns: {missing}")
    return [
        StepRecord(**{c: (bool(row[c]) if c == "collision" else float(row[c])) for c in STEP_COLUMNS})
        for _, row in df.iterrows()
    ]
