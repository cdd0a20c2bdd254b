import numpy as np
import pytest

from navsim.config import RunConfig
from navsim.scenario import ScenarioSpec
from navsim.world import WorldModel


EMPTY_ROOM = """\
bounds 0 0 10 10
robot 2 5 0
goal 3 5
horizon 600
dt 0.1
"""


@pytest.fixture
def run_cfg():
    return RunConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def room():
    return WorldModel(bounds=(0.0, 0.0, 10.0, 10.0))


@pytest.fixture
def open_world():
    """Bounds far beyond the lidar range"""
    return WorldModel(bounds=(-100.0, -100.0, 100.0, 100.0))


@pytest.fixture
def empty_room_spec(room):
    return ScenarioSpec(name="empty_room", world=room, robot_start=(2.0, 5.0, 0.0), goal=(3.0, 5.0),
                        horizon_steps=600, dt=0.1)


@pytest.fixture
def small_cfg():
    """Tiny networks and batches so training loops finish in seconds"""
    return RunConfig.model_validate({
        "seed": 7,
        "lidar": {"n_rays": 360},
        "lomap": {"size": 20, "resolution": 0.3},
        "congestion": {"n_dist": 5, "n_ang": 6},
        "dqn": {"batch_size": 8, "warmup": 8, "buffer_size": 500, "max_high_steps": 3,
                "segment_max_steps": 20, "episodes": 2, "her_k": 2, "checkpoint_every": 1},
        "cpo": {"value_iters": 2, "min_batch": 32},
        "low_net": {"frame_hidden": 16, "trunk": [32]},
        "train_low": {"updates": 2, "batch_steps": 64, "episode_steps": 30, "max_obstacles": 2,
                      "max_pedestrians": 1, "checkpoint_every": 1},
        "eval": {"episodes": 2, "policy": "flat", "low_controller": "pursuit"},
    })
