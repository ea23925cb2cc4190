from pathlib import Path

import pytest

import vigmap
from vigmap.config import (config_from_dict, find_config, load_config, parse_override,
                           synth_spec_from_dict)
from vigmap.errors import ConfigError
from vigmap.ioe import Constraints

CONFIGS = Path(vigmap.__file__).parent / "configs"


@pytest.mark.parametrize("name", ["xavier", "maestro", "quick", "toy", "agx_c100"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / f"{name}.toml")
    assert cfg.platform.cus and len(cfg.table) > 0
    assert len(cfg.sha256) == 64


def test_defaults_follow_published_settings():
    cfg = config_from_dict({})
    assert (cfg.ioe.population, cfg.ioe.generations) == (200, 10)
    assert (cfg.ioe.mutation_prob, cfg.ioe.crossover_prob) == (0.4, 0.8)
    assert (cfg.ooe.elite_fraction, cfg.ooe.mutation_prob, cfg.ooe.crossover_prob) == (0.3, 0.4, 0.5)
    assert cfg.platform.name == "xavier-like"


@pytest.mark.parametrize("doc,match", [
    ({"ioe": {"popsize": 3}}, "popsize"),
    ({"extra": 1}, "extra"),
    ({"ioe": {"constraints": {"speed": 1.0}}}, "speed"),
    ({"ioe": {"population": "many"}}, "population"),
    ({"ooe": {"fitness_weights": [1, 2]}}, "fitness_weights"),
    ({"platform": {"preset": "xavier-like", "cost_table": "x.csv"}}, "either"),
    ({"archspace": {"schedule": "spiral"}}, "spiral"),
    ({"analysis": {"reference": [1, 2]}}, "reference"),
    ({"ooe": {"dataset": 3, "accuracy": "missing.csv"}}, "not found"),
])
def test_invalid_configs_are_rejected(doc, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(doc)


def test_overrides_and_hash(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("seed = 3\n[ioe]\npopulation = 20\n")
    base = load_config(p)
    over = load_config(p, [parse_override("ioe.population=30"),
                           parse_override("ioe.constraints.latency_increase=0.05")])
    assert base.ioe.population == 20 and over.ioe.population == 30
    assert over.ioe.constraints == Constraints(latency_increase=0.05)
    assert base.sha256 != over.sha256
    assert load_config(p).sha256 == base.sha256
    assert parse_override("ioe.dvfs_mode=searched") == ("ioe.dvfs_mode", "searched")
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_relative_paths_resolve_against_config(tmp_path):
    cfg = load_config(CONFIGS / "agx_c100.toml")
    assert cfg.platform.name == "xavier-agx-fixture"
    assert cfg.accuracy.kind == "table"


def test_find_config_uses_env_dir(tmp_path, monkeypatch):
    (tmp_path / "vigmap.toml").write_text("seed = 1\n")
    monkeypatch.chdir(Path("/"))
    monkeypatch.setenv("VIGMAP_CONFIG_DIR", str(tmp_path))
    assert find_config(None) == tmp_path / "vigmap.toml"
    monkeypatch.delenv("VIGMAP_CONFIG_DIR")
    with pytest.raises(ConfigError, match="not found"):
        find_config(None)


def test_bad_toml_reports_location(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[ioe\npopulation = 3\n")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(p)


def test_spec_file():
    spec = synth_spec_from_dict({"preset": "maestro-3cu", "noise": 0.0, "name": "flat"})
    assert spec.name == "flat" and spec.noise == 0.0
    with pytest.raises(ConfigError):
        synth_spec_from_dict({"preset": "maestro-3cu", "colour": 1})
