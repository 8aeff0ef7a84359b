import json

import pytest

from tools.config_loader import ConfigLoader
from tools.experiment_config import (
    build_cloud,
    build_system,
    load_experiment_config,
    parse_experiment_config,
    resolve_metric,
)
from dynamics.torus_skew import RotationSystem, SkewSystem
from utils.errors import ConfigError, exit_code_for

from conftest import ROOT


def test_settings_from_yaml(settings):
    assert settings.get_setting("metrics.defaults.2.K") == 8
    assert settings.metric_defaults(4) == {"K": 4, "s": 1.0}
    assert settings.metric_defaults(9) == {"K": 4, "s": 1.0}
    assert settings.get_setting("calibration.epsilon_factor") == 3.0
    assert settings.get_setting("no.such.key", "fallback") == "fallback"
    assert settings.validate_config()


def test_environment_overrides(settings, tmp_path, monkeypatch):
    assert settings.get_setting("runtime.ledger_path") == str(tmp_path / "ledger.db")
    monkeypatch.setenv("ERGODICLAB_THREADS", "3")
    loader = ConfigLoader(env_file=str(tmp_path / "missing.env"), config_file=str(ROOT / "config" / "config.yaml"))
    assert loader.get_setting("runtime.threads") == 3
    assert "ERGODICLAB_THREADS" in loader.get_config_summary()["env_overrides"]


def test_missing_settings_file_uses_defaults(tmp_path):
    loader = ConfigLoader(env_file=str(tmp_path / "none.env"), config_file=str(tmp_path / "none.yaml"))
    assert loader.metric_defaults(1) == {"K": 8, "s": 1.0}
    assert loader.validate_config()
    loader.update_setting("runtime.threads", 0)
    assert not loader.validate_config()


def test_parse_valid_config(experiment_dict):
    config = parse_experiment_config(experiment_dict())
    assert config.kind == "distance_profile"
    assert config.cloud.size == 400
    assert config.config_hash() == parse_experiment_config(experiment_dict()).config_hash()
    assert config.config_hash() != parse_experiment_config(experiment_dict(seed=4)).config_hash()
    assert config.role_seed("cloud") == config.role_seed("cloud")
    assert config.role_seed("cloud") != config.role_seed("family")


@pytest.mark.parametrize("overrides, path", [
    ({"format": 2}, "format"),
    ({"bogus": 1}, "bogus"),
    ({"cloud": {"size": 0}}, "cloud.size"),
    ({"metric": {"K": 0}}, "metric.K"),
    ({"kind": "cocycle_met"}, "system.type"),
])
def test_schema_errors_name_the_field(experiment_dict, overrides, path):
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(experiment_dict(**overrides))
    assert info.value.field_path == path
    assert exit_code_for(info.value) == 2


def test_system_errors_point_into_system(experiment_dict):
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(experiment_dict(system={"type": "torus"}))
    assert info.value.field_path.startswith("system")


def test_load_experiment_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{\"format\": 1,", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment_config(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment_config(listed)


def test_shipped_configs_validate():
    paths = sorted((ROOT / "configs").rglob("*.json"))
    assert len(paths) >= 10
    for path in paths:
        config = load_experiment_config(path)
        assert config.name == path.stem
        build_system(config.system)


def test_build_system(experiment_dict):
    rotation = build_system(parse_experiment_config(experiment_dict()).system)
    assert isinstance(rotation, RotationSystem) and rotation.d == 2
    skew = parse_experiment_config(experiment_dict(
        kind="cocycle_met",
        system={"type": "skew", "skews": [{"winding": 1}, {"winding": 2, "harmonics": [[[1, 0], 0.1, 0.0]]}]},
    ))
    system = build_system(skew.system)
    assert isinstance(system, SkewSystem) and system.d == 3
    bad = parse_experiment_config(experiment_dict(kind="expansive_s", system={"type": "expansive", "p": 1}))
    with pytest.raises(ConfigError) as info:
        build_system(bad.system)
    assert info.value.field_path == "system"


def test_resolve_metric_fills_defaults(settings, experiment_dict):
    config = parse_experiment_config(experiment_dict(metric={}))
    metric = resolve_metric(config, settings, 2)
    assert metric["K"] == 8 and metric["s"] == 1.0
    assert metric["family_seed"] == config.role_seed("family")
    explicit = resolve_metric(parse_experiment_config(experiment_dict()), settings, 2)
    assert explicit["K"] == 3


def test_build_cloud(experiment_dict):
    config = parse_experiment_config(experiment_dict())
    system = build_system(config.system)
    cloud = build_cloud(config, system)
    assert cloud.size == 400
    assert cloud.space == system.space
    again = build_cloud(config, system)
    assert (cloud.points == again.points).all()
    missing_point = parse_experiment_config(experiment_dict(cloud={"constructor": "point_mass"}))
    with pytest.raises(ConfigError):
        build_cloud(missing_point, system)


def test_config_dump_is_json(experiment_dict):
    config = parse_experiment_config(experiment_dict())
    assert json.loads(config.canonical_json())["system"]["type"] == "rotation"
