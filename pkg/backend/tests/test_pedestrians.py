import math

import numpy as np
import pytest

from navsim.config import PedestrianConfig
from navsim.pedestrians import PedestrianState, cap_speed, social_forces, spawn_pedestrians, step_pedestrians
from navsim.scenario import PedestrianSpec
from navsim.world import RobotState, WorldModel


def ped(x, y, gx, gy, v0=0.8, vx=0.0, vy=0.0):
    return PedestrianState(position=(x, y), velocity=(vx, vy), goal=(gx, gy), v0=v0)


class TestSocialForces:
    def test_equilibrium_keeps_velocity(self, open_world):
        out = step_pedestrians([ped(0.0, 0.0, 40.0, 0.0, vx=0.8)], open_world, None, 0.1)
        assert out[0].velocity[0] == pytest.approx(0.8, abs=1e-12)
        assert out[0].velocity[1] == pytest.approx(0.0, abs=1e-12)

    def test_driving_acceleration(self, open_world):
        f = social_forces([ped(0.0, 0.0, 10.0, 0.0)], open_world, None)
        assert f[0, 0] == pytest.approx(1.6, abs=1e-9)
        assert f[0, 1] == pytest.approx(0.0, abs=1e-9)

    def test_head_on_pair_separates(self, open_world):
        a = ped(0.0, 0.0, 10.0, 0.0, vx=0.8)
        b = ped(1.0, 0.1, -9.0, 0.1, vx=-0.8)
        out = step_pedestrians([a, b], open_world, None, 0.1)
        assert out[1].position[1] - out[0].position[1] > 0.1

    def test_pair_forces_are_equal_and_opposite(self, open_world):
        a = ped(0.0, 0.0, 0.0, 0.0, v0=0.0)
        b = ped(0.4, 0.3, 0.4, 0.3, v0=0.0)
        f = social_forces([a, b], open_world, None)
        np.testing.assert_allclose(f[0], -f[1], atol=1e-12)
        swapped = social_forces([b, a], open_world, None)
        np.testing.assert_allclose(swapped, f[::-1], atol=1e-12)

    def test_robot_repels(self, open_world):
        robot = RobotState(0.5, 0.0, 0.0)
        f = social_forces([ped(0.0, 0.0, 0.0, 0.0, v0=0.0)], open_world, robot)
        assert f[0, 0] < 0

    def test_walls_repel(self):
        world = WorldModel(bounds=(0.0, 0.0, 10.0, 10.0))
        f = social_forces([ped(0.3, 5.0, 0.3, 5.0, v0=0.0)], world, None)
        assert f[0, 0] > 0


class TestStepPedestrians:
    def test_speed_cap_holds(self, rng):
        world = WorldModel(bounds=(0.0, 0.0, 6.0, 6.0), circles=[(3.0, 3.0, 0.5)])
        peds = [ped(*rng.uniform(0.5, 5.5, size=4), v0=float(rng.uniform(0.5, 1.2))) for _ in range(6)]
        cfg = PedestrianConfig(strength=20.0)
        for _ in range(100):
            peds = step_pedestrians(peds, world, RobotState(2.0, 2.0, 0.0), 0.1, cfg)
            for p in peds:
                assert p.speed <= 1.3 * p.v0

    def test_cap_is_exact(self, rng):
        for _ in range(10_000):
            cap = float(rng.uniform(0.1, 2.0))
            raw = rng.normal(size=2) * 5.0
            v = cap_speed(raw, cap)
            speed = math.hypot(v[0], v[1])
            assert speed <= cap
            if math.hypot(raw[0], raw[1]) > cap:
                assert speed == pytest.approx(cap, rel=1e-12)

    def test_slow_velocity_untouched(self):
        v = np.array([0.3, -0.4])
        assert cap_speed(v, 1.0) is v

    def test_no_interaction_is_pure_relaxation(self, open_world):
        cfg = PedestrianConfig(strength=0.0)
        p = [ped(0.0, 0.0, 50.0, 0.0, v0=1.0)]
        dt, tau = 0.1, 0.5
        for k in range(1, 21):
            p = step_pedestrians(p, open_world, None, dt, cfg)
            expected = 1.0 - (1.0 - dt / tau) ** k
            assert p[0].velocity[0] == pytest.approx(expected, abs=1e-9)
            assert p[0].velocity[1] == 0.0

    def test_retarget_and_stop(self, open_world):
        looping = spawn_pedestrians([PedestrianSpec(start=(0.0, 0.0), goal=(0.1, 0.0), v0=0.5,
                                                    waypoints=[(5.0, 0.0)])])
        out = step_pedestrians(looping, open_world, None, 0.1)
        assert out[0].goal == (5.0, 0.0)

        once = spawn_pedestrians([PedestrianSpec(start=(0.0, 0.0), goal=(0.1, 0.0), v0=0.5, loop=False)])
        out = step_pedestrians(once, open_world, None, 0.1)
        assert out[0].stopped

    def test_rejects_non_positive_dt(self, open_world):
        with pytest.raises(ValueError):
            step_pedestrians([ped(0, 0, 1, 0)], open_world, None, 0.0)

    def test_empty_list(self, open_world):
        assert step_pedestrians([], open_world, None, 0.1) == []
