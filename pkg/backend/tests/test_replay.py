from dataclasses import replace

import pytest

from navsim.replay import SEGMENT_COLUMNS, render_trajectory, replay_segments
from navsim.world import WorldModel

from .test_metrics import step


def steps_with_subgoals(subgoals, collisions=None):
    collisions = collisions or [False] * len(subgoals)
    out = []
    for i, ((sx, sy), c) in enumerate(zip(subgoals, collisions)):
        out.append(replace(step(0.1 * (i + 1), 0.1 * i, collision=c), subgoal_x=sx, subgoal_y=sy))
    return out


class TestReplaySegments:
    def test_runs_of_equal_subgoals(self):
        a, b = (1.0, 1.0), (2.0, 0.0)
        steps = steps_with_subgoals([a, a, b, b, b, a], [False, True, True, False, True, False])
        df = replay_segments(steps)
        assert list(df.columns) == SEGMENT_COLUMNS
        assert df["steps"].tolist() == [2, 3, 1]
        assert df["segment"].tolist() == [0, 1, 2]
        assert df["collisions"].tolist() == [1, 2, 0]
        assert df["path_length"].tolist() == pytest.approx([0.1, 0.2, 0.0])
        assert (df.loc[1, "subgoal_x"], df.loc[1, "subgoal_y"]) == b
        assert df.loc[1, "t_start"] == pytest.approx(0.3)
        assert df.loc[1, "t_end"] == pytest.approx(0.5)

    def test_empty(self):
        df = replay_segments([])
        assert len(df) == 0
        assert list(df.columns) == SEGMENT_COLUMNS


class TestRenderTrajectory:
    def test_png(self, tmp_path):
        world = WorldModel(bounds=(0.0, 0.0, 4.0, 4.0), walls=[(1.0, 0.0, 1.0, 2.0)], circles=[(3.0, 3.0, 0.3)],
                           polygons=[[(2.0, 0.5), (3.0, 0.5), (3.0, 1.0)]])
        steps = steps_with_subgoals([(1.0, 1.0)] * 3, [False, True, False])
        path = render_trajectory(steps, tmp_path / "plots" / "ep.png", world, goal=(3.5, 0.5))
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_svg_without_world(self, tmp_path):
        path = render_trajectory(steps_with_subgoals([(1.0, 1.0)]), tmp_path / "ep.svg")
        assert "<svg" in path.read_text()
