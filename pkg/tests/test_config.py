import pytest

from twotime.config import ConfigError, config_from_dict, load_config
from twotime.scenarios import CATALOG


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "scenario: ho_ground_state\nseed: 7\n"))
    scen = CATALOG["ho_ground_state"]
    assert cfg.seed == 7 and cfg.replicas == scen.default_replicas
    assert cfg["omega"] == 1.0 and cfg["time_spacings"] == [0.5, 0.25]
    assert cfg.formats == ("csv", "json")


def test_non_positive_step_rejected(tmp_path):
    with pytest.raises(ConfigError, match="langevin_step must be positive"):
        load_config(write(tmp_path, "scenario: ou_check\nlangevin_step: 0\n"))


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="fobar"):
        load_config(write(tmp_path, "scenario: ou_check\nfobar: 1\n"))


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match=r"run.yaml:3:\d+: parse error"):
        load_config(write(tmp_path, "scenario: ou_check\nseed: 1\nmass: 1: 2\nhbar: 1\n"))


def test_nested_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match="nested"):
        load_config(write(tmp_path, "scenario: ou_check\nphysics:\n  mass: 1\n"))


def test_missing_and_unknown_scenario():
    with pytest.raises(ConfigError, match="scenario is required"):
        config_from_dict({"seed": 1})
    with pytest.raises(ConfigError, match="unknown scenario"):
        config_from_dict({"scenario": "nope"})


def test_type_errors():
    with pytest.raises(ConfigError, match="replicas must be of type int"):
        config_from_dict({"scenario": "ou_check", "replicas": 2.5})
    with pytest.raises(ConfigError, match="tunneling must be of type bool"):
        config_from_dict({"scenario": "double_well_ssb", "tunneling": "yes"})
    with pytest.raises(ConfigError, match="formats"):
        config_from_dict({"scenario": "ou_check", "formats": ["xml"]})


def test_formats_string_and_overrides(tmp_path):
    cfg = load_config(write(tmp_path, "scenario: ou_check\nformats: csv, transcripts\n"),
                      {"seed": 3, "replicas": None})
    assert cfg.formats == ("csv", "transcripts") and cfg.seed == 3


def test_hash_ignores_placement():
    a = config_from_dict({"scenario": "ou_check", "workers": 1, "output_dir": "x"})
    b = config_from_dict({"scenario": "ou_check", "workers": 4, "output_dir": "y"})
    c = config_from_dict({"scenario": "ou_check", "seed": 1})
    assert a.hash == b.hash != c.hash


def test_every_scenario_accepts_its_defaults():
    for name in CATALOG:
        cfg = config_from_dict({"scenario": name})
        assert cfg.batch <= cfg.replicas
