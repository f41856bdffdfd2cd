"""
Tests for experiment settings.
"""

import json

import pytest

from apps.core.exceptions import ConfigError
from apps.guided import RetrievalMode
from main.settings import (
    ExperimentConfig,
    config_from_flat,
    flatten,
    parse_config,
    parse_override,
    serialize_config,
    unflatten,
    write_config,
)


class TestParseConfig:
    """Test reading flat dotted-key configs."""

    def test_empty_file_gives_defaults(self, tmp_path):
        """Test the defaults of the loss weights and retrieval settings."""
        path = tmp_path / "empty.json"
        path.write_text("")
        cfg = parse_config(path)
        assert (cfg.loss.style_recon, cfg.loss.cycle, cfg.loss.kl) == (10.0, 10.0, 0.1)
        assert cfg.retrieval.margin == 0.2
        assert cfg.guidance.r == 3
        assert cfg.evaluation.k == 10

    def test_no_file(self):
        """Test that no path gives the defaults."""
        assert parse_config(None) == ExperimentConfig()

    def test_flat_keys(self, tmp_path):
        """Test that dotted keys land in their sections."""
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"network.preset": "toy", "guidance.mode": "random", "seed": 4}))
        cfg = parse_config(path)
        assert cfg.network.preset == "toy"
        assert cfg.guidance_config().mode is RetrievalMode.RANDOM
        assert cfg.seed == 4

    def test_unknown_key(self, tmp_path):
        """Test that a misspelt key is named in the error."""
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"loss.cylce": 5}))
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert err.value.path == "loss.cylce"

    def test_out_of_range(self):
        """Test that range violations name their key."""
        with pytest.raises(ConfigError) as err:
            config_from_flat({"guidance.r": -1})
        assert err.value.path == "guidance.r"

    def test_missing_file(self, tmp_path):
        """Test that an absent config file is a config error."""
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        """Test that malformed JSON is a config error."""
        path = tmp_path / "c.json"
        path.write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(path)

    def test_not_an_object(self, tmp_path):
        """Test that a JSON list is rejected."""
        path = tmp_path / "c.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="object"):
            parse_config(path)

    def test_overrides_win(self, tmp_path):
        """Test that command-line overrides replace file values."""
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"guidance.r": 1}))
        cfg = parse_config(path, ["guidance.r=5", "network.preset=gradcheck"])
        assert cfg.guidance.r == 5
        assert cfg.network_config().image_size == 16

    def test_unknown_mix(self):
        """Test that the negative mix is checked when settings are built."""
        with pytest.raises(ConfigError, match="retrieval.mix"):
            config_from_flat({"retrieval.mix": "brutal"}).retrieval_settings()


class TestOverrides:
    """Test key=value overrides."""

    def test_json_value(self):
        """Test that values are read as JSON."""
        assert parse_override("evaluation.seeds=[0, 1]") == ("evaluation.seeds", [0, 1])

    def test_plain_string(self):
        """Test that non-JSON values stay strings."""
        assert parse_override("network.preset=toy") == ("network.preset", "toy")

    def test_malformed(self):
        """Test that an override needs an equals sign."""
        with pytest.raises(ConfigError):
            parse_override("guidance.r")


class TestFlatten:
    """Test dotted-key conversion."""

    def test_round_trip(self):
        """Test that unflatten inverts flatten."""
        tree = {"a": {"b": 1, "c": {"d": [1, 2]}}, "e": None}
        assert unflatten(flatten(tree)) == tree

    def test_value_used_as_section(self):
        """Test that a key cannot be both a value and a section."""
        with pytest.raises(ConfigError):
            unflatten({"seed": 1, "seed.x": 2})

    def test_serialized_config_reloads(self, tmp_path):
        """Test that a written config resolves to the same experiment."""
        cfg = config_from_flat({"network.preset": "toy", "evaluation.seeds": [3]})
        path = write_config(cfg, tmp_path / "config.json")
        assert parse_config(path) == cfg
        assert serialize_config(cfg)["evaluation.seeds"] == [3]
