"""
World file parsing into validated ScenarioSpec objects
"""
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import OracleConfig, RobotConfig, SimConfig
from .errors import ScenarioParseError, ScenarioValidationError
from .world import WorldModel

logger = logging.getLogger(__name__)

Pose = Tuple[float, float, float]
Point = Tuple[float, float]
Region = Tuple[float, float, float, float]


class PedestrianSpec(BaseModel):
    """Pedestrian as declared in a world file"""
    start: Point
    goal: Point
    v0: float = Field(..., ge=0.0)
    waypoints: List[Point] = Field(default_factory=list)
    loop: bool = True

    @property
    def route(self) -> List[Point]:
        return [self.goal] + list(self.waypoints)


class ScenarioSpec(BaseModel):
    """Complete, validated description of one navigation scenario"""
    model_config = ConfigDict(frozen=True)

    name: str = "scenario"
    world: WorldModel
    robot_start: Pose
    goal: Point
    pedestrians: List[PedestrianSpec] = Field(default_factory=list)
    horizon_steps: int
    dt: float
    seed: int = 0
    start_region: Optional[Region] = None
    goal_region: Optional[Region] = None
    min_separation: float = 0.0

    @property
    def randomized(self) -> bool:
        return self.start_region is not None or self.goal_region is not None


def _floats(tokens: List[str], count: Optional[int], line_no: int, record: str) -> List[float]:
    if count is not None and len(tokens) != count:
        raise ScenarioParseError(line_no, f"'{record}' expects {count} values, got {len(tokens)}")
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise ScenarioParseError(line_no, f"'{record}' values must be numbers: {' '.join(tokens)}")
    if not all(math.isfinite(v) for v in values):
        raise ScenarioParseError(line_no, f"'{record}' values must be finite")
    return values


def _int(tokens: List[str], line_no: int, record: str) -> int:
    if len(tokens) != 1:
        raise ScenarioParseError(line_no, f"'{record}' expects 1 value, got {len(tokens)}")
    try:
        return int(tokens[0])
    except ValueError:
        raise ScenarioParseError(line_no, f"'{record}' expects an integer, got '{tokens[0]}'")


def parse_world_file(text: str, sim_cfg: Optional[SimConfig] = None, name: str = "scenario") -> Dict:
    """
    Parse world file text into raw ScenarioSpec fields without validating invariants

    Args:
        text: World file contents
        sim_cfg: Defaults for horizon and dt when the file omits them
        name: Scenario name

    Returns:
        Dictionary of ScenarioSpec fields
    """
    sim_cfg = sim_cfg or SimConfig()
    fields: Dict = {
        "name": name,
        "horizon_steps": sim_cfg.horizon_steps,
        "dt": sim_cfg.dt,
        "pedestrians": [],
    }
    walls, circles, polygons = [], [], []
    bounds = None
    pedestrians: List[Dict] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        record, *tokens = line.split()
        record = record.lower()

        if record == "bounds":
            if bounds is not None:
                raise ScenarioParseError(line_no, "duplicate 'bounds' record")
            bounds = tuple(_floats(tokens, 4, line_no, record))
        elif record == "wall":
            walls.append(tuple(_floats(tokens, 4, line_no, record)))
        elif record == "circle":
            cx, cy, r = _floats(tokens, 3, line_no, record)
            if r <= 0:
                raise ScenarioParseError(line_no, "circle radius must be positive")
            circles.append((cx, cy, r))
        elif record == "poly":
            values = _floats(tokens, None, line_no, record)
            if len(values) < 6 or len(values) % 2:
                raise ScenarioParseError(line_no, "'poly' expects at least 3 x y vertex pairs")
            polygons.append([(values[i], values[i + 1]) for i in range(0, len(values), 2)])
        elif record == "robot":
            fields["robot_start"] = tuple(_floats(tokens, 3, line_no, record))
        elif record == "goal":
            fields["goal"] = tuple(_floats(tokens, 2, line_no, record))
        elif record == "ped":
            x, y, gx, gy, v0 = _floats(tokens, 5, line_no, record)
            if v0 < 0:
                raise ScenarioParseError(line_no, "pedestrian v0 must be >= 0")
            pedestrians.append({"start": (x, y), "goal": (gx, gy), "v0": v0, "waypoints": [], "loop": True})
        elif record == "ped_wp":
            if not pedestrians:
                raise ScenarioParseError(line_no, "'ped_wp' must follow a 'ped' record")
            pedestrians[-1]["waypoints"].append(tuple(_floats(tokens, 2, line_no, record)))
        elif record == "ped_loop":
            if not pedestrians:
                raise ScenarioParseError(line_no, "'ped_loop' must follow a 'ped' record")
            if len(tokens) != 1 or tokens[0].lower() not in ("on", "off"):
                raise ScenarioParseError(line_no, "'ped_loop' expects 'on' or 'off'")
            pedestrians[-1]["loop"] = tokens[0].lower() == "on"
        elif record == "horizon":
            fields["horizon_steps"] = _int(tokens, line_no, record)
        elif record == "dt":
            fields["dt"] = _floats(tokens, 1, line_no, record)[0]
        elif record == "seed":
            fields["seed"] = _int(tokens, line_no, record)
        elif record == "start_region":
            fields["start_region"] = tuple(_floats(tokens, 4, line_no, record))
        elif record == "goal_region":
            fields["goal_region"] = tuple(_floats(tokens, 4, line_no, record))
        elif record == "min_separation":
            fields["min_separation"] = _floats(tokens, 1, line_no, record)[0]
        else:
            raise ScenarioParseError(line_no, f"unknown record '{record}'")

    if bounds is None:
        raise ScenarioParseError(0, "missing 'bounds' record")
    if "robot_start" not in fields:
        raise ScenarioParseError(0, "missing 'robot' record")
    if "goal" not in fields:
        raise ScenarioParseError(0, "missing 'goal' record")

    try:
        fields["world"] = WorldModel(bounds=bounds, walls=walls, circles=circles, polygons=polygons)
    except ValueError as e:
        raise ScenarioParseError(0, f"invalid geometry: {e}") from e
    fields["pedestrians"] = [PedestrianSpec(**p) for p in pedestrians]
    return fields


def load_scenario(text: str,
                  sim_cfg: Optional[SimConfig] = None,
                  robot_cfg: Optional[RobotConfig] = None,
                  oracle_cfg: Optional[OracleConfig] = None,
                  name: str = "scenario") -> ScenarioSpec:
    """
    Parse and validate a world file

    Args:
        text: World file contents
        sim_cfg: horizon / dt defaults
        robot_cfg: Robot footprint used by the free-space checks
        oracle_cfg: Oracle grid settings used by the reachability check
        name: Scenario name carried into logs and results

    Returns:
        Validated ScenarioSpec

    Raises:
        ScenarioParseError: Malformed record (carries the line number)
        ScenarioValidationError: One or more invariants violated
    """
    from .validators import validate_scenario

    fields = parse_world_file(text, sim_cfg, name)
    spec = ScenarioSpec(**fields)

    result = validate_scenario(spec, robot_cfg, oracle_cfg)
    if not result.is_valid:
        raise ScenarioValidationError(result.validation_errors)
    for warning in result.warnings:
        logger.warning(f"Scenario {name}: {warning}")
    logger.info(f"Loaded scenario {name}: {len(spec.world.walls)} walls, "
                f"{len(spec.world.circles) + len(spec.world.polygons)} static obstacles, "
                f"{len(spec.pedestrians)} pedestrians")
    return spec


def load_scenario_file(path: Union[str, Path], **kwargs) -> ScenarioSpec:
    path = Path(path)
    with open(path, "r") as f:
        text = f.read()
    return load_scenario(text, name=kwargs.pop("name", path.stem), **kwargs)


def _sample_in(region: Region, rng: np.random.Generator) -> Point:
    return (float(rng.uniform(region[0], region[2])), float(rng.uniform(region[1], region[3])))


def sample_start_goal(spec: ScenarioSpec, rng: np.random.Generator,
                      is_free: Callable[[Point], bool],
                      reachable: Callable[[Point, Point], bool],
                      max_tries: int = 200) -> Tuple[Pose, Point]:
    """
    Draw a start pose and goal for one episode from the scenario's regions

    Fixed start / goal records are used for whichever side has no region.
    Falls back to the fixed pair when no valid sample is found.
    """
    if not spec.randomized:
        return spec.robot_start, spec.goal
    for _ in range(max_tries):
        if spec.start_region is not None:
            sx, sy = _sample_in(spec.start_region, rng)
            heading = float(rng.uniform(-math.pi, math.pi))
            start = (sx, sy, heading)
        else:
            start = spec.robot_start
        goal = _sample_in(spec.goal_region, rng) if spec.goal_region is not None else spec.goal
        if math.hypot(goal[0] - start[0], goal[1] - start[1]) < spec.min_separation:
            continue
        if not (is_free(start[:2]) and is_free(goal)):
            continue
        if reachable(start[:2], goal):
            return start, goal
    logger.warning(f"Scenario {spec.name}: no valid start/goal sample after {max_tries} tries, using fixed pair")
    return spec.robot_start, spec.goal
