import math

import numpy as np
import pytest

from navsim.config import LidarConfig
from navsim.lidar import LidarScan, scan
from navsim.world import WorldModel

N = 1080
INC = 2 * math.pi / N


@pytest.fixture
def cluttered():
    return WorldModel(bounds=(-4.0, -3.0, 5.0, 3.5), walls=[(1.0, -2.0, 3.0, 1.0)],
                      circles=[(-2.0, 1.5, 0.5)], polygons=[[(0.5, 2.0), (1.5, 2.0), (1.0, 3.0)]])


class TestScan:
    def test_nothing_in_range(self, open_world):
        s = scan(open_world, [], (0.0, 0.0, 0.0))
        assert s.n_rays == N
        assert np.all(s.ranges == 6.0)
        assert s.angle_increment == pytest.approx(INC)

    def test_wall_ahead(self):
        world = WorldModel(bounds=(-100, -100, 100, 100), walls=[(2.0, -100.0, 2.0, 100.0)])
        s = scan(world, [], (0.0, 0.0, 0.0))
        assert s.ranges[0] == pytest.approx(2.0)
        assert s.ranges[N // 2] == 6.0
        # ray N/4 points left, parallel to the wall
        assert s.ranges[N // 4] == 6.0

    def test_lower_clamp(self, open_world):
        world = WorldModel(bounds=open_world.bounds, circles=[(0.6, 0.0, 0.5)])
        s = scan(world, [], (0.0, 0.0, 0.0))
        assert s.ranges[0] == 0.3
        assert np.all((s.ranges >= 0.3) & (s.ranges <= 6.0))

    def test_pedestrians_are_hit(self, open_world):
        class Ped:
            position = (0.0, 2.0)
            radius = 0.25

        s = scan(open_world, [Ped()], (0.0, 0.0, 0.0))
        assert s.ranges[N // 4] == pytest.approx(1.75)

    @pytest.mark.parametrize("k", [1, 7, 270])
    def test_rotation_is_circular_shift(self, cluttered, k):
        base = scan(cluttered, [], (0.0, 0.0, 0.0)).ranges
        turned = scan(cluttered, [], (0.0, 0.0, k * INC)).ranges
        np.testing.assert_allclose(turned, np.roll(base, -k), atol=1e-9)

    def test_adding_geometry_never_increases_ranges(self, cluttered):
        more = WorldModel(bounds=cluttered.bounds, walls=cluttered.walls + [(-1.0, -1.0, -1.0, 1.0)],
                          circles=cluttered.circles + [(2.0, 2.5, 0.3)], polygons=cluttered.polygons)
        before = scan(cluttered, [], (0.0, 0.0, 0.3)).ranges
        after = scan(more, [], (0.0, 0.0, 0.3)).ranges
        assert np.all(after <= before + 1e-12)
        assert np.any(after < before)

    def test_mirror_symmetry(self, cluttered):
        mirrored = WorldModel(
            bounds=(cluttered.bounds[0], -cluttered.bounds[3], cluttered.bounds[2], -cluttered.bounds[1]),
            walls=[(x0, -y0, x1, -y1) for x0, y0, x1, y1 in cluttered.walls],
            circles=[(cx, -cy, r) for cx, cy, r in cluttered.circles],
            polygons=[[(x, -y) for x, y in p] for p in cluttered.polygons],
        )
        base = scan(cluttered, [], (0.0, 0.0, 0.0)).ranges
        flipped = scan(mirrored, [], (0.0, 0.0, 0.0)).ranges
        np.testing.assert_allclose(flipped, base[(-np.arange(N)) % N], atol=1e-9)

    def test_noise_needs_rng(self, open_world):
        with pytest.raises(ValueError):
            scan(open_world, [], (0.0, 0.0, 0.0), LidarConfig(noise_std=0.05))

    def test_noise_stays_clamped(self, cluttered, rng):
        s = scan(cluttered, [], (0.0, 0.0, 0.0), LidarConfig(noise_std=0.5), rng)
        assert np.all((s.ranges >= 0.3) & (s.ranges <= 6.0))


class TestLidarScan:
    def test_constant_clamps(self):
        assert np.all(LidarScan.constant(10.0).ranges == 6.0)
        assert np.all(LidarScan.constant(0.0).ranges == 0.3)

    def test_bearings_start_at_heading(self):
        s = LidarScan.from_ranges(np.full(8, 2.0))
        np.testing.assert_allclose(s.bearings, np.arange(8) * math.pi / 4)
