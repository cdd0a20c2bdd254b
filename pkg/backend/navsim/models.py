"""
Pydantic models for reports and ledger records
"""
from datetime import datetime
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class MetricsReport(BaseModel):
    """Aggregate navigation metrics over N episodes; SPL and SNT reported x100"""
    sr: float = Field(..., ge=0.0, le=100.0, description="Success rate (%)")
    srn: float = Field(..., ge=0.0, le=100.0, description="Collision-free success rate (%)")
    ct: float = Field(..., ge=0.0, description="Mean contact events per episode")
    spl: float = Field(..., ge=0.0, le=100.0)
    snt: float = Field(..., ge=0.0, le=100.0)
    n: int = Field(..., ge=1)
    config_hash: str = ""
    scenario: Optional[str] = None
    policy: Optional[str] = None
    runtime_oracle_calls: int = 0

    @model_validator(mode="after")
    def check_ordering(self):
        if self.srn > self.sr + 1e-9:
            raise ValueError("srn cannot exceed sr")
        return self


class EpisodeSummary(BaseModel):
    """Per-episode line of an evaluation summary"""
    episode_index: int
    seed: int
    success: bool
    collision_count: int
    path_length: float
    duration: float
    optimal_dist: Optional[float] = None
    optimal_time: Optional[float] = None
    final_distance: float


class EvalOutput(BaseModel):
    """Contents of metrics.json"""
    report: MetricsReport
    episodes: List[EpisodeSummary]
    scenarios: List[str]


class EpisodeResultRecord(BaseModel):
    """A single row of the episode ledger"""
    model_config = ConfigDict(from_attributes=True)

    id: int
    timestamp: datetime
    run_id: str
    scenario: str
    episode_index: int
    seed: int
    policy: str
    success: bool
    collision_count: int
    path_length: float
    duration: float
    optimal_dist: Optional[float] = None
    optimal_time: Optional[float] = None
    config_hash: str


class RunStats(BaseModel):
    """Aggregated ledger statistics"""
    total_episodes: int
    successful_episodes: int
    failed_episodes: int
    total_collisions: int
    mean_path_length: float


class ScenarioStats(BaseModel):
    """Ledger statistics per scenario"""
    scenario: str
    total_episodes: int
    successful_episodes: int
    total_collisions: int


class LedgerReport(BaseModel):
    """Output of the stats command"""
    run_id: Optional[str] = None
    scenario: Optional[str] = None
    policy: Optional[str] = None
    stats: RunStats
    scenarios: List[ScenarioStats]
    recent: List[EpisodeResultRecord]
