"""
Replay of logged episodes: per-sub-goal segment tables and trajectory plots
"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from matplotlib.patches import Circle, Polygon, Rectangle

from .metrics import StepRecord, polyline_length, rising_edges
from .world import WorldModel

logger = logging.getLogger(__name__)

SEGMENT_COLUMNS = ["segment", "subgoal_x", "subgoal_y", "t_start", "t_end", "steps", "path_length", "collisions"]


def replay_segments(steps: Sequence[StepRecord]) -> pd.DataFrame:
    """One row per run of steps sharing the same sub-goal world point"""
    rows = []
    start = 0
    for i in range(1, len(steps) + 1):
        if i < len(steps) and (steps[i].subgoal_x, steps[i].subgoal_y) == (steps[start].subgoal_x, steps[start].subgoal_y):
            continue
        seg = steps[start:i]
        rows.append({
            "segment": len(rows),
            "subgoal_x": seg[0].subgoal_x,
            "subgoal_y": seg[0].subgoal_y,
            "t_start": seg[0].t,
            "t_end": seg[-1].t,
            "steps": len(seg),
            "path_length": polyline_length(np.array([[s.x, s.y] for s in seg])),
            "collisions": rising_edges([s.collision for s in seg]),
        })
        start = i
    return pd.DataFrame(rows, columns=SEGMENT_COLUMNS)


def _draw_world(ax, world: WorldModel) -> None:
    x0, y0, x1, y1 = world.bounds
    ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, color="black", linewidth=1.5))
    for wx0, wy0, wx1, wy1 in world.walls:
        ax.plot([wx0, wx1], [wy0, wy1], color="black", linewidth=2)
    for cx, cy, r in world.circles:
        ax.add_patch(Circle((cx, cy), r, color="grey"))
    for poly in world.polygons:
        ax.add_patch(Polygon(poly, closed=True, color="grey"))


def render_trajectory(steps: Sequence[StepRecord], path: Union[str, Path], world: Optional[WorldModel] = None,
                      goal: Optional[Sequence[float]] = None) -> Path:
    """
    Plot the robot path, sub-goals and contact points

    Args:
        steps: Logged control steps
        path: Output file; the suffix (.svg or .png) selects the format
        world: Static geometry drawn underneath, if known
        goal: Final goal marker

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig = Figure(figsize=(6, 6))
    ax = fig.subplots()
    if world is not None:
        _draw_world(ax, world)
    xy = np.array([[s.x, s.y] for s in steps]) if steps else np.zeros((0, 2))
    if len(xy):
        ax.plot(xy[:, 0], xy[:, 1], color="tab:blue", linewidth=1.2, label="robot")
        hits = np.array([[s.x, s.y] for s in steps if s.collision])
        if len(hits):
            ax.scatter(hits[:, 0], hits[:, 1], color="tab:red", s=12, label="contact")
    segments = replay_segments(steps)
    if len(segments):
        ax.scatter(segments["subgoal_x"], segments["subgoal_y"], marker="x", color="tab:orange", label="sub-goal")
    if goal is not None:
        ax.scatter([goal[0]], [goal[1]], marker="*", s=120, color="tab:green", label="goal")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize="small")
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg")
    logger.info(f"Rendered {len(steps)} steps to {path}")
    return path
