import pytest

from navsim.config import RewardConfig
from navsim.reward import guidance_distance_fn, high_reward, high_reward_terms, low_reward
from navsim.world import WorldModel


class TestHighReward:
    def test_arrival(self):
        assert high_reward(0.3, 1.0, 0.3, False) == pytest.approx(99.7)

    def test_progress(self):
        assert high_reward(4.0, 5.0, 4.0, False) == pytest.approx(0.0)

    def test_invalid_subgoal(self):
        assert high_reward(4.0, 4.0, 4.0, True) == pytest.approx(-21.0)

    def test_unreachable_distance_marks_invalid(self):
        terms = high_reward_terms(4.0, None, 3.0, False)
        assert terms["dist"] == 0.0
        assert terms["out"] == -20.0

    def test_arrival_threshold_is_strict(self):
        assert high_reward_terms(0.5, 1.0, 1.0, False)["arrival"] == 0.0
        assert high_reward_terms(0.4999, 1.0, 1.0, False)["arrival"] == 100.0

    def test_sparse_guidance_drops_shaping(self):
        assert high_reward(4.0, 5.0, 4.0, False, RewardConfig(guidance="sparse")) == -1.0

    def test_shaping_telescopes(self, rng):
        d = list(rng.uniform(1.0, 10.0, size=50))
        total = sum(high_reward_terms(5.0, a, b, False)["dist"] for a, b in zip(d, d[1:]))
        assert total == pytest.approx(d[0] - d[-1], abs=1e-9)


class TestLowReward:
    def test_subgoal_reached(self):
        assert low_reward(0.4, 1.0, 0.9) == pytest.approx(99.1)

    def test_cruising(self):
        assert low_reward(3.0, 3.022, 3.0) == pytest.approx(-0.978)

    def test_no_progress(self):
        assert low_reward(3.0, 3.0, 3.0) == pytest.approx(-1.0)

    def test_unknown_distance(self):
        assert low_reward(3.0, None, 2.0) == pytest.approx(-1.0)


class TestGuidance:
    def test_euclidean(self, room):
        assert guidance_distance_fn("euclidean", room)((0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0)

    def test_astar_goes_around_walls(self):
        world = WorldModel(bounds=(0, 0, 10, 10), walls=[(5.0, 0.0, 5.0, 8.0)])
        d = guidance_distance_fn("astar", world)((2.25, 2.25), (7.75, 2.25))
        assert d > 5.5

    def test_unknown_mode(self, room):
        with pytest.raises(ValueError):
            guidance_distance_fn("manhattan", room)
