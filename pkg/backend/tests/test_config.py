from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

from navsim.config import Config, LidarConfig, LomapConfig, RunConfig, config_hash
from navsim.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    def _write(raw):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(raw))
        return path
    return _write


class TestConfig:
    def test_packaged_defaults(self):
        config = Config()
        assert config.run.lomap.size == 60
        assert config.run.congestion.n_dist * config.run.congestion.n_ang == 225
        assert config.scenario_paths()
        assert all(p.exists() for p in config.scenario_paths())
        config.require_mode("train-high")

    def test_paths_resolve_against_the_file(self, config_file, tmp_path):
        config = Config(config_file({"output_dir": "out", "checkpoints": {"high": "ck/high.ckpt"}}))
        assert config.output_dir() == (tmp_path / "out").resolve()
        assert config.checkpoint_path("high") == (tmp_path / "ck" / "high.ckpt").resolve()
        assert config.checkpoint_path("low") is None
        assert config.resolve("/abs/path") == Path("/abs/path")

    def test_env_overrides(self, config_file, monkeypatch):
        monkeypatch.setenv("NAVSIM_SEED", "42")
        monkeypatch.setenv("NAVSIM_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("NAVSIM_LOG_JSON", "true")
        run = Config(config_file({"seed": 3})).run
        assert run.seed == 42
        assert run.logging.level == "DEBUG"
        assert run.logging.json_format is True

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            Config(tmp_path / "missing.yaml")

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            Config(path)

    def test_invalid_values(self, config_file):
        with pytest.raises(ConfigError, match="Invalid config"):
            Config(config_file({"lomap": {"size": 21}}))

    def test_reload(self, config_file):
        path = config_file({"seed": 1})
        config = Config(path)
        path.write_text(yaml.safe_dump({"seed": 2}))
        config.reload()
        assert config.run.seed == 2


class TestRequireMode:
    def test_needs_scenarios(self, config_file):
        config = Config(config_file({}))
        with pytest.raises(ConfigError, match="at least one scenario"):
            config.require_mode("train-high")

    def test_missing_scenario_file(self, config_file):
        config = Config(config_file({"scenarios": ["nowhere.world"]}))
        with pytest.raises(ConfigError, match="scenario file not found"):
            config.require_mode("eval")

    def test_eval_collects_every_problem(self, config_file):
        config = Config(config_file({"eval": {"policy": "hrl", "low_controller": "learned"}}))
        with pytest.raises(ConfigError) as info:
            config.require_mode("eval")
        message = str(info.value)
        assert "checkpoints.high" in message and "checkpoints.low" in message

    def test_train_low_needs_nothing(self, config_file):
        Config(config_file({})).require_mode("train-low")


class TestModels:
    def test_hash_is_stable_and_sensitive(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())
        assert config_hash(RunConfig()) != config_hash(RunConfig(seed=1))
        assert len(config_hash(RunConfig())) == 16

    def test_lidar_range_order(self):
        with pytest.raises(ValidationError):
            LidarConfig(range_min=6.0, range_max=6.0)

    def test_lomap_size_even(self):
        with pytest.raises(ValidationError):
            LomapConfig(size=59)
        assert LomapConfig(size=20).size == 20
