"""
Evaluation runs: episodes per scenario, per-episode logs, aggregate metrics
"""
import logging
import uuid
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from torch import nn

from .config import Config, RunConfig, config_hash
from .congestion import SectorGrid
from .controllers import LearnedController, LowController, PursuitController
from .database import init_db, make_engine, make_session_factory
from .errors import CheckpointError, NavsimError
from .high_policy import GreedyHighPolicy
from .high_trainer import load_high_network
from .low_trainer import load_low_actor
from .metrics import EpisodeLog, aggregate, write_episode_csv
from .models import EpisodeSummary, EvalOutput, MetricsReport
from .results_service import save_episode_result
from .runner import ScenarioOracle, run_hierarchical_episode
from .scenario import ScenarioSpec, load_scenario_file

logger = logging.getLogger(__name__)

_worker_state: Dict = {}


def load_scenarios(config: Config) -> List[ScenarioSpec]:
    run = config.run
    return [load_scenario_file(p, sim_cfg=run.sim, robot_cfg=run.robot, oracle_cfg=run.oracle)
            for p in config.scenario_paths()]


def build_policies(config: Config) -> Tuple[Optional[nn.Module], Optional[nn.Module]]:
    """Networks named by the checkpoints section, or None where the config does not need them"""
    run = config.run
    high_net = load_high_network(config.checkpoint_path("high"), run) if run.eval.policy == "hrl" else None
    actor = load_low_actor(config.checkpoint_path("low"), run) if run.eval.low_controller == "learned" else None
    if high_net is not None:
        n_sectors = SectorGrid.from_config(run.congestion, run.lidar).size
        if high_net.n_actions != n_sectors:
            raise CheckpointError(f"High-level checkpoint has {high_net.n_actions} actions, "
                                  f"the sector grid has {n_sectors}")
    return high_net, actor


def _controllers(run: RunConfig, high_net, actor) -> Tuple[Optional[GreedyHighPolicy], LowController]:
    high = GreedyHighPolicy(high_net, run.dqn.goal_scale) if high_net is not None else None
    low = LearnedController(actor, run.robot, run.safety) if actor is not None else PursuitController(run.robot)
    return high, low


def _init_worker(run: RunConfig, high_net, actor) -> None:
    _worker_state.update(run=run, nets=(high_net, actor), oracles={})


def _episode_job(spec: ScenarioSpec, index: int) -> EpisodeLog:
    run = _worker_state["run"]
    oracles = _worker_state["oracles"]
    if spec.name not in oracles:
        oracles[spec.name] = ScenarioOracle(spec, run)
    high, low = _controllers(run, *_worker_state["nets"])
    return run_hierarchical_episode(spec, run, high, low, index, oracles[spec.name])


def _run_scenario(spec: ScenarioSpec, run: RunConfig, high_net, actor, episodes: int) -> List[EpisodeLog]:
    if run.eval.workers <= 1:
        _init_worker(run, high_net, actor)
        logs = []
        for i in range(episodes):
            try:
                logs.append(_episode_job(spec, i))
            except NavsimError:
                raise
            except Exception as e:
                raise NavsimError(f"{spec.name} episode {i} failed: {e}") from e
        return logs

    with ProcessPoolExecutor(max_workers=run.eval.workers, initializer=_init_worker,
                             initargs=(run, high_net, actor)) as pool:
        futures = [pool.submit(_episode_job, spec, i) for i in range(episodes)]
        logs = []
        for i, f in enumerate(futures):
            try:
                logs.append(f.result())
            except Exception as e:
                raise NavsimError(f"{spec.name} episode {i} failed: {e}") from e
        return logs


def _summary(log: EpisodeLog) -> EpisodeSummary:
    return EpisodeSummary(
        episode_index=log.episode_index, seed=log.seed, success=log.success,
        collision_count=log.collision_count, path_length=log.path_length, duration=log.duration,
        optimal_dist=log.optimal_dist, optimal_time=log.optimal_time, final_distance=log.final_distance,
    )


def run_eval(config: Config, episodes: Optional[int] = None, output_dir: Optional[Path] = None) -> MetricsReport:
    """
    Evaluate the configured policy stack on every scenario

    Writes one step CSV per episode (when enabled), metrics.json with the
    aggregate report and per-scenario breakdown, and ledger rows when the
    store is enabled. metrics.json is written only after every episode
    finished.

    Args:
        config: Loaded configuration (scenarios and checkpoints resolved against it)
        episodes: Episodes per scenario, defaults to eval.episodes
        output_dir: Overrides the configured output directory

    Returns:
        Aggregate MetricsReport over all scenarios
    """
    config.require_mode("eval")
    run = config.run
    n = episodes if episodes is not None else run.eval.episodes
    out = Path(output_dir) if output_dir else config.output_dir()
    digest = config_hash(run)
    specs = load_scenarios(config)
    high_net, actor = build_policies(config)

    logs: List[EpisodeLog] = []
    per_scenario: Dict[str, MetricsReport] = {}
    for spec in specs:
        logger.info(f"Evaluating {spec.name}: {n} episodes, policy={run.eval.policy}, low={run.eval.low_controller}")
        scenario_logs = _run_scenario(spec, run, high_net, actor, n)
        per_scenario[spec.name] = aggregate(scenario_logs, digest, spec.name, run.eval.policy)
        logs.extend(scenario_logs)
        if run.eval.write_step_csv:
            for log in scenario_logs:
                write_episode_csv(log, out / "episodes" / f"{spec.name}_{log.episode_index:04d}.csv")

    report = aggregate(logs, digest, None, run.eval.policy)
    if report.runtime_oracle_calls:
        logger.error(f"Planner was queried {report.runtime_oracle_calls} times inside control loops")

    if run.store.enabled:
        engine = make_engine(run.store.url)
        init_db(engine)
        run_id = uuid.uuid4().hex[:12]
        with make_session_factory(engine)() as session:
            for log in logs:
                save_episode_result(session, run_id, log, digest)
        logger.info(f"Stored {len(logs)} episodes in the ledger as run {run_id}")

    out.mkdir(parents=True, exist_ok=True)
    payload = EvalOutput(report=report, episodes=[_summary(l) for l in logs], scenarios=[s.name for s in specs])
    (out / "metrics.json").write_text(payload.model_dump_json(indent=2))
    for name, r in per_scenario.items():
        (out / f"metrics_{name}.json").write_text(r.model_dump_json(indent=2))
    logger.info(f"SR {report.sr:.1f} SRN {report.srn:.1f} CT {report.ct:.2f} SPL {report.spl:.1f} "
                f"SNT {report.snt:.1f} over {report.n} episodes")
    return report
