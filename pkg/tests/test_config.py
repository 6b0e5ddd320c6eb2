from pathlib import Path

import pytest

from twophase.config import METHOD_NAMES, PROFILES, RunConfig, build_run_config, load_config_file
from twophase.errors import InvalidConfig
from twophase.sampling import Scenario


def test_defaults_follow_desk_profile():
    config = build_run_config({})
    desk = PROFILES["desk"]
    assert config.replicates == desk.replicates == 100
    assert (config.bart.n_trees, config.bart.n_keep, config.imputations) == (50, 200, 10)
    assert config.methods == METHOD_NAMES
    assert config.scenario.scenario is Scenario.S1
    assert config.adjustment.bart == config.bart


def test_paper_profile():
    config = build_run_config({"profile": "paper"})
    assert (config.replicates, config.bart.n_trees, config.bart.n_keep) == (500, 100, 1000)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# desk run\nscenario = s3\nreplicates = 20\nseed = 11  # fixed\nmethods = benchmark, wt-lgm\n")
    file_values = load_config_file(path)
    config = build_run_config(file_values, {"replicates": 5, "seed": None, "out": "m.json", "format": "json"})
    assert config.scenario.scenario is Scenario.S3
    assert config.replicates == 5
    assert config.seed == 11
    assert config.methods == ("benchmark", "wt-lgm")
    assert config.out == Path("m.json")


def test_hyphenated_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("collapse-singletons = yes\nn-trees = 20\n")
    config = build_run_config(load_config_file(path))
    assert config.collapse_singletons
    assert config.bart.n_trees == 20


@pytest.mark.parametrize("values", [
    {"colour": "blue"},
    {"replicates": "many"},
    {"profile": "huge"},
    {"methods": "benchmark,mystery"},
    {"methods": "benchmark,benchmark"},
    {"imputations": 1, "methods": "mi-bart"},
    {"imputations": 500, "methods": "mi-bart"},
    {"level": 1.2},
    {"format": "xml"},
    {"jobs": 0},
    {"scenario": "S9"},
    {"collapse_singletons": "sometimes"},
])
def test_invalid_settings(values):
    with pytest.raises(InvalidConfig):
        build_run_config(values)


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidConfig):
        load_config_file(tmp_path / "absent.cfg")


def test_malformed_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("just some words\n")
    with pytest.raises(InvalidConfig):
        load_config_file(path)


def test_single_imputation_allowed_without_mi():
    assert RunConfig(methods=("benchmark",), imputations=1).imputations == 1
