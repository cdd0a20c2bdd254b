"""
Command-line entry point: train either policy level, evaluate, replay logs, query the ledger
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pythonjsonlogger import jsonlogger

from .config import Config, config_hash
from .database import init_db, make_engine, make_session_factory
from .errors import ConfigError, NavsimError, ScenarioParseError, ScenarioValidationError, TrainingDivergedError
from .evaluation import load_scenarios, run_eval
from .high_trainer import HighLevelTrainer
from .low_trainer import LowLevelTrainer
from .metrics import read_steps_csv
from .replay import render_trajectory, replay_segments
from .results_service import get_ledger_report
from .scenario import load_scenario_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def setup_logging(level: str = "INFO", json_format: bool = False) -> None:
    """Configure root logging, optionally as one JSON object per line"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    if json_format:
        handler = logging.StreamHandler()
        handler.setFormatter(jsonlogger.JsonFormatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
        root.addHandler(handler)
        root.setLevel(level.upper())
    else:
        logging.basicConfig(
            level=level.upper(),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navsim", description="Hierarchical mapless navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("train-high", "Train the high-level sub-goal policy"),
                            ("train-low", "Train the low-level motion policy")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--episodes", type=int, default=None,
                       help="Total episodes (train-high) or updates (train-low)")
        p.add_argument("--resume", action="store_true", help="Continue from the configured checkpoint")

    p = sub.add_parser("eval", help="Evaluate the policy stack on the configured scenarios")
    p.add_argument("--config", required=True)
    p.add_argument("--episodes", type=int, default=None, help="Episodes per scenario")
    p.add_argument("--output", default=None, help="Output directory (defaults to output_dir)")

    p = sub.add_parser("stats", help="Summarize the episode ledger")
    p.add_argument("--config", required=True)
    p.add_argument("--run-id", default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--policy", default=None, choices=["hrl", "flat"])
    p.add_argument("--limit", type=int, default=20, help="Recent episodes to list")
    p.add_argument("--output", default=None, help="Write the JSON report here instead of stdout")

    p = sub.add_parser("replay", help="Export a logged episode")
    p.add_argument("--log", required=True, help="Episode step CSV")
    p.add_argument("--out", required=True, choices=["svg", "png", "csv"])
    p.add_argument("--scenario", default=None, help="World file drawn under the trajectory")
    p.add_argument("--output", default=None, help="Output file (defaults next to the log)")
    return parser


def _dump_diagnostics(output_dir: Path, err: TrainingDivergedError) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "diagnostics.json"
    path.write_text(json.dumps({"error": str(err), **err.diagnostics}, indent=2, default=str))
    logger.error(f"Training diverged, diagnostics written to {path}")


def _train(args, config: Config) -> int:
    run = config.run
    if args.resume:
        config.run = run = run.model_copy(update={"resume": True})
    out = config.output_dir()
    try:
        if args.command == "train-high":
            config.require_mode("train-high")
            trainer = HighLevelTrainer(run, load_scenarios(config), out, config.checkpoint_path("high"))
            trainer.train(args.episodes)
        else:
            trainer = LowLevelTrainer(run, out, config.checkpoint_path("low"))
            trainer.train(args.episodes)
    except TrainingDivergedError as e:
        _dump_diagnostics(out, e)
        return EXIT_RUNTIME
    logger.info(f"Training finished, checkpoint {trainer.checkpoint_path} (config {config_hash(run)})")
    return EXIT_OK


def _stats(args, config: Config) -> int:
    store = config.run.store
    if not store.enabled:
        logger.warning(f"store.enabled is false, reading the ledger at {store.url} anyway")
    engine = make_engine(store.url)
    init_db(engine)
    with make_session_factory(engine)() as session:
        report = get_ledger_report(session, args.run_id, args.scenario, args.policy, args.limit)
    text = report.model_dump_json(indent=2)
    if args.output:
        target = Path(args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
        logger.info(f"Wrote {target}")
    else:
        print(text)
    return EXIT_OK


def _replay(args) -> int:
    log_path = Path(args.log)
    if not log_path.exists():
        logger.error(f"Log not found: {log_path}")
        return EXIT_USAGE
    steps = read_steps_csv(log_path)
    target = Path(args.output) if args.output else log_path.with_name(f"{log_path.stem}_replay.{args.out}")
    if args.out == "csv":
        target.parent.mkdir(parents=True, exist_ok=True)
        replay_segments(steps).to_csv(target, index=False)
        logger.info(f"Wrote {target}")
        return EXIT_OK
    world = goal = None
    if args.scenario:
        spec = load_scenario_file(args.scenario)
        world, goal = spec.world, spec.goal
    render_trajectory(steps, target, world, goal)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    setup_logging()
    try:
        if args.command == "replay":
            return _replay(args)
        config = Config(args.config)
        setup_logging(config.run.logging.level, config.run.logging.json_format)
        if args.command == "eval":
            run_eval(config, args.episodes, Path(args.output) if args.output else None)
            return EXIT_OK
        if args.command == "stats":
            return _stats(args, config)
        return _train(args, config)
    except (ConfigError, ScenarioParseError, ScenarioValidationError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except NavsimError as e:
        logger.error(f"Run failed: {e}", exc_info=True)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
