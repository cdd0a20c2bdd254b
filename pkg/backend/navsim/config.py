"""
Configuration loader for run settings
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError

logger = logging.getLogger(__name__)


class RobotConfig(BaseModel):
    """Differential-drive kinematic envelope"""
    radius: float = Field(0.105, gt=0, description="Robot footprint radius (m)")
    v_max: float = Field(0.22, gt=0, description="Maximum linear velocity (m/s)")
    omega_max: float = Field(2.84, gt=0, description="Maximum angular velocity (rad/s)")
    penetration_tolerance: float = Field(
        0.5, ge=0.0, le=1.0,
        description="Fraction of the radius the robot may sink into static geometry before translation is blocked"
    )


class SimConfig(BaseModel):
    """Defaults applied when a world file omits them"""
    dt: float = Field(0.1, gt=0)
    horizon_steps: int = Field(600, gt=0)


class LidarConfig(BaseModel):
    n_rays: int = Field(1080, gt=0)
    range_min: float = Field(0.3, gt=0)
    range_max: float = Field(6.0, gt=0)
    noise_std: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def check_range(self):
        if self.range_min >= self.range_max:
            raise ValueError("range_min must be smaller than range_max")
        return self


class PedestrianConfig(BaseModel):
    """Social force parameters"""
    strength: float = Field(2.0, ge=0.0, description="Repulsion strength A (m/s^2)")
    range: float = Field(0.3, gt=0, description="Repulsion range B (m)")
    tau: float = Field(0.5, gt=0, description="Relaxation time (s)")
    radius: float = Field(0.25, gt=0)
    speed_cap: float = Field(1.3, gt=0, description="Speed cap as a multiple of v0")
    goal_tolerance: float = Field(0.3, gt=0)


class LomapConfig(BaseModel):
    size: int = Field(60, gt=0)
    resolution: float = Field(0.2, gt=0)

    @field_validator("size")
    @classmethod
    def even_size(cls, v):
        if v % 2:
            raise ValueError("LOMap size must be even so the robot sits on the grid centre")
        return v


class CongestionConfig(BaseModel):
    d_s: float = Field(3.0, gt=1.0, description="Safe distance threshold, also the logarithm base")
    alpha: float = Field(0.25, ge=0.0)
    beta: float = Field(0.25)
    d_u_min: float = Field(0.5, gt=0)
    d_u_max: float = Field(2.0, gt=0)
    timeout_s: float = Field(30.0, gt=0)
    n_dist: int = Field(15, gt=0)
    n_ang: int = Field(15, gt=0)
    mask_clearance: float = Field(0.3, ge=0.0)


class RewardConfig(BaseModel):
    r_arrive_val: float = 100.0
    r_step_val: float = -1.0
    r_out_val: float = -20.0
    mu: float = 1.0
    d_limit: float = Field(0.5, gt=0)
    guidance: Literal["astar", "euclidean", "sparse"] = "astar"
    low_guidance: Literal["astar", "euclidean", "sparse"] = "astar"


class OracleConfig(BaseModel):
    resolution: float = Field(0.5, gt=0)
    snap_radius: float = Field(1.0, ge=0.0)
    reward_inflation: float = Field(0.0, ge=0.0)


class DqnConfig(BaseModel):
    gamma: float = Field(0.99, ge=0.0, le=1.0)
    buffer_size: int = Field(100_000, gt=0)
    batch_size: int = Field(64, gt=0)
    eps_start: float = Field(1.0, ge=0.0, le=1.0)
    eps_end: float = Field(0.05, ge=0.0, le=1.0)
    eps_decay_steps: int = Field(30_000, gt=0)
    target_sync: int = Field(1_000, gt=0)
    lr: float = Field(1e-4, ge=0.0)
    her_k: int = Field(4, ge=0)
    episodes: int = Field(2_000, gt=0)
    max_high_steps: int = Field(40, gt=0)
    segment_max_steps: int = Field(300, gt=0, description="Control-step budget per sub-goal segment")
    warmup: int = Field(500, ge=0, description="Minimum buffer size before updates start")
    goal_scale: float = Field(10.0, gt=0)
    grad_clip: float = Field(10.0, gt=0)
    checkpoint_every: int = Field(100, gt=0)


class CpoConfig(BaseModel):
    delta: float = Field(0.01, gt=0, description="KL trust-region radius")
    d_cost: float = Field(0.025, ge=0.0, description="Bound on the per-step discounted cost rate")
    cg_iters: int = Field(10, gt=0)
    cg_damping: float = Field(0.1, ge=0.0)
    cg_tol: float = Field(1e-10, gt=0)
    backtrack_steps: int = Field(10, gt=0)
    backtrack_coeff: float = Field(0.8, gt=0, lt=1)
    kl_accept_factor: float = Field(1.5, ge=1.0)
    gamma: float = Field(0.99, ge=0.0, le=1.0)
    lam: float = Field(0.95, ge=0.0, le=1.0)
    value_lr: float = Field(1e-3, gt=0)
    value_iters: int = Field(80, ge=0)
    min_batch: int = Field(512, gt=0)


class LowNetConfig(BaseModel):
    frame_hidden: int = Field(128, gt=0)
    trunk: List[int] = Field(default_factory=lambda: [256, 128])
    history: int = Field(4, gt=0)
    init_log_std: float = -0.5


class SafetyConfig(BaseModel):
    enabled: bool = True
    margin: float = Field(0.2, ge=0.0)
    horizon: float = Field(1.0, gt=0)
    check_dt: float = Field(0.1, gt=0)
    bisect_iters: int = Field(20, gt=0)


class TrainLowConfig(BaseModel):
    updates: int = Field(500, gt=0)
    batch_steps: int = Field(2048, gt=0)
    arena_size: float = Field(10.0, gt=2.0)
    max_obstacles: int = Field(8, ge=0)
    max_pedestrians: int = Field(3, ge=0)
    episode_steps: int = Field(300, gt=0)
    subgoal_min: float = Field(0.5, gt=0)
    subgoal_max: float = Field(5.0, gt=0)
    checkpoint_every: int = Field(10, gt=0)


class EvalConfig(BaseModel):
    episodes: int = Field(100, gt=0)
    policy: Literal["hrl", "flat"] = "hrl"
    low_controller: Literal["learned", "pursuit"] = "learned"
    workers: int = Field(1, gt=0)
    write_step_csv: bool = True


class CheckpointConfig(BaseModel):
    high: Optional[str] = None
    low: Optional[str] = None


class StoreConfig(BaseModel):
    enabled: bool = False
    url: str = "sqlite:///./navsim_results.db"


class LoggingConfig(BaseModel):
    level: str = "INFO"
    json_format: bool = False


class RunConfig(BaseModel):
    """Complete configuration for one navsim run"""
    seed: int = 0
    scenarios: List[str] = Field(default_factory=list)
    output_dir: str = "runs/default"
    dtype: Literal["float32", "float64"] = "float32"
    resume: bool = False

    robot: RobotConfig = Field(default_factory=RobotConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    lidar: LidarConfig = Field(default_factory=LidarConfig)
    pedestrians: PedestrianConfig = Field(default_factory=PedestrianConfig)
    lomap: LomapConfig = Field(default_factory=LomapConfig)
    congestion: CongestionConfig = Field(default_factory=CongestionConfig)
    reward: RewardConfig = Field(default_factory=RewardConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    dqn: DqnConfig = Field(default_factory=DqnConfig)
    cpo: CpoConfig = Field(default_factory=CpoConfig)
    low_net: LowNetConfig = Field(default_factory=LowNetConfig)
    safety: SafetyConfig = Field(default_factory=SafetyConfig)
    train_low: TrainLowConfig = Field(default_factory=TrainLowConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    checkpoints: CheckpointConfig = Field(default_factory=CheckpointConfig)
    store: StoreConfig = Field(default_factory=StoreConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)


class EnvSettings(BaseSettings):
    """Environment overrides (NAVSIM_SEED, NAVSIM_LOG_LEVEL, NAVSIM_LOG_JSON)"""
    model_config = SettingsConfigDict(env_prefix="NAVSIM_", env_file=".env", extra="ignore")

    seed: Optional[int] = None
    log_level: Optional[str] = None
    log_json: Optional[bool] = None


class Config:
    """Configuration manager for a run"""

    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        self.base_dir = Path(__file__).parent.parent
        self.config_dir = self.base_dir / "config"
        self.config_file = Path(config_file) if config_file else self.config_dir / "navsim.yaml"

        # Load configuration
        self.run = self._load_run_config()

    def _load_run_config(self) -> RunConfig:
        """Load the YAML file and apply environment overrides"""
        if not self.config_file.exists():
            raise ConfigError(f"Config file not found: {self.config_file}")

        with open(self.config_file, "r") as f:
            raw = yaml.safe_load(f) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"Config file {self.config_file} must contain a mapping")

        try:
            run = RunConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"Invalid config {self.config_file}: {e}") from e

        env = EnvSettings()
        updates = {}
        if env.seed is not None:
            logger.info(f"NAVSIM_SEED overrides config seed {run.seed} -> {env.seed}")
            updates["seed"] = env.seed
        if env.log_level is not None or env.log_json is not None:
            updates["logging"] = run.logging.model_copy(update={
                k: v for k, v in (("level", env.log_level), ("json_format", env.log_json)) if v is not None
            })
        return run.model_copy(update=updates) if updates else run

    def resolve(self, path: Union[str, Path]) -> Path:
        """Resolve a path relative to the config file's directory"""
        p = Path(path)
        return p if p.is_absolute() else (self.config_file.parent / p).resolve()

    def scenario_paths(self) -> List[Path]:
        return [self.resolve(s) for s in self.run.scenarios]

    def output_dir(self) -> Path:
        return self.resolve(self.run.output_dir)

    def checkpoint_path(self, level: str) -> Optional[Path]:
        value = getattr(self.run.checkpoints, level)
        return self.resolve(value) if value else None

    def require_mode(self, mode: str) -> None:
        """Check that the fields a mode needs are present and referenced files exist"""
        errors = []
        if mode in ("eval", "train-high"):
            if not self.run.scenarios:
                errors.append(f"mode {mode} needs at least one scenario")
            for p in self.scenario_paths():
                if not p.exists():
                    errors.append(f"scenario file not found: {p}")
        if mode == "eval":
            if self.run.eval.policy == "hrl" and not self.run.checkpoints.high:
                errors.append("eval with policy=hrl needs checkpoints.high")
            if self.run.eval.low_controller == "learned" and not self.run.checkpoints.low:
                errors.append("eval with low_controller=learned needs checkpoints.low")
            for level in ("high", "low"):
                p = self.checkpoint_path(level)
                needed = (level == "high" and self.run.eval.policy == "hrl") or \
                         (level == "low" and self.run.eval.low_controller == "learned")
                if needed and p is not None and not p.exists():
                    errors.append(f"checkpoint not found: {p}")
        if errors:
            raise ConfigError("; ".join(errors))

    def reload(self):
        """Reload configuration from file"""
        self.run = self._load_run_config()


def config_hash(run: RunConfig) -> str:
    """Stable hash of the resolved configuration"""
    canonical = json.dumps(run.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
