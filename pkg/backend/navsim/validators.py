"""
Validation functions for scenario invariants
"""
import logging
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from .config import OracleConfig, RobotConfig
from .oracle import astar_dist, rasterize
from .world import WorldModel

if TYPE_CHECKING:
    from .scenario import ScenarioSpec

logger = logging.getLogger(__name__)

_EPS = 1e-9


class ScenarioValidationResult(BaseModel):
    """Result of scenario validation"""
    is_valid: bool
    validation_errors: List[str] = []
    warnings: List[str] = []
    oracle_distance: Optional[float] = None


def _inside(world: WorldModel, x: float, y: float) -> bool:
    x0, y0, x1, y1 = world.bounds
    return x0 - _EPS <= x <= x1 + _EPS and y0 - _EPS <= y <= y1 + _EPS


def point_in_obstacle(world: WorldModel, x: float, y: float) -> bool:
    """True when the point lies on or inside a wall, circle or polygon"""
    return bool(world.clearance(np.array([[x, y]]))[0] <= 0.0)


def validate_geometry(world: WorldModel) -> List[str]:
    errors = []
    for i, (x0, y0, x1, y1) in enumerate(world.walls):
        if not (_inside(world, x0, y0) and _inside(world, x1, y1)):
            errors.append(f"wall {i} outside bounds")
    for i, (cx, cy, r) in enumerate(world.circles):
        if not (_inside(world, cx - r, cy - r) and _inside(world, cx + r, cy + r)):
            errors.append(f"circle {i} outside bounds")
    for i, poly in enumerate(world.polygons):
        if not all(_inside(world, x, y) for x, y in poly):
            errors.append(f"polygon {i} outside bounds")
    return errors


def _check_point(world: WorldModel, label: str, point: Tuple[float, float], errors: List[str]) -> bool:
    if not _inside(world, point[0], point[1]):
        errors.append(f"{label} outside bounds")
        return False
    if point_in_obstacle(world, point[0], point[1]):
        errors.append(f"{label} inside obstacle")
        return False
    return True


def validate_scenario(spec: "ScenarioSpec",
                      robot_cfg: Optional[RobotConfig] = None,
                      oracle_cfg: Optional[OracleConfig] = None) -> ScenarioValidationResult:
    """
    Check every scenario invariant and collect all violations

    Args:
        spec: Parsed scenario
        robot_cfg: Robot footprint for clearance warnings
        oracle_cfg: Grid settings for the reachability check

    Returns:
        ScenarioValidationResult with validation status and the start-goal oracle distance
    """
    robot_cfg = robot_cfg or RobotConfig()
    oracle_cfg = oracle_cfg or OracleConfig()
    world = spec.world
    errors: List[str] = []
    warnings: List[str] = []

    errors.extend(validate_geometry(world))

    if spec.horizon_steps <= 0:
        errors.append("horizon must be positive")
    if spec.dt <= 0:
        errors.append("dt must be positive")
    if spec.min_separation < 0:
        errors.append("min_separation must be >= 0")

    start_ok = _check_point(world, "start", spec.robot_start[:2], errors)
    goal_ok = _check_point(world, "goal", spec.goal, errors)

    if start_ok:
        clearance = float(world.clearance(np.array([spec.robot_start[:2]]))[0])
        if clearance < robot_cfg.radius:
            warnings.append(f"start clearance {clearance:.3f} m is below the robot radius")

    for label, region in (("start_region", spec.start_region), ("goal_region", spec.goal_region)):
        if region is None:
            continue
        if region[2] <= region[0] or region[3] <= region[1]:
            errors.append(f"{label} must satisfy x0 < x1 and y0 < y1")
        elif not (_inside(world, region[0], region[1]) and _inside(world, region[2], region[3])):
            errors.append(f"{label} outside bounds")

    for i, ped in enumerate(spec.pedestrians):
        for label, point in [("start", ped.start)] + [("waypoint", p) for p in ped.route]:
            _check_point(world, f"pedestrian {i} {label}", point, errors)

    oracle_distance = None
    if start_ok and goal_ok:
        grid = rasterize(world, 0.0, oracle_cfg.resolution)
        oracle_distance = astar_dist(grid, spec.robot_start[:2], spec.goal, oracle_cfg.snap_radius)
        if oracle_distance is None:
            errors.append("goal unreachable on the oracle grid")

    # Log validation results
    if errors:
        logger.warning(f"Scenario validation failed: {errors}")
    elif warnings:
        logger.info(f"Scenario validation warnings: {warnings}")
    else:
        logger.debug("Scenario validation passed successfully")

    return ScenarioValidationResult(
        is_valid=not errors,
        validation_errors=errors,
        warnings=warnings,
        oracle_distance=oracle_distance,
    )
