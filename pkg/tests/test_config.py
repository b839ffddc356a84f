import logging

import pytest

import config
from error_handler import ConfigError
from logger import ROOT_NAME, get_logger, set_log_level
from utils import config_hash, make_rng


def test_parse_config_text():
    values = config.parse_config_text(
        "# power sweep\n"
        "scenario = mse-sweep   # trailing comment\n"
        "N = 20\n"
        "alpha = 0.2\n"
        "angles_deg = 10, 12\n"
        "method = music, robust-gmusic\n"
        "groups =\n"
        "grid_start_deg = none\n"
    )
    assert values["scenario"] == "mse-sweep"
    assert values["N"] == 20 and isinstance(values["N"], int)
    assert values["alpha"] == 0.2
    assert values["angles_deg"] == [10.0, 12.0]
    assert values["method"] == ["music", "robust-gmusic"]
    assert values["groups"] == []
    assert values["grid_start_deg"] is None


def test_unknown_key_reports_its_line():
    with pytest.raises(ConfigError) as info:
        config.parse_config_text("N = 20\nalpah = 0.2\n")
    assert info.value.key == "alpah"
    assert info.value.line == 2
    assert "line 2" in str(info.value)


def test_bad_values():
    with pytest.raises(ConfigError):
        config.parse_config_text("N twenty\n")
    with pytest.raises(ConfigError) as info:
        config.parse_config_text("trials = many\n")
    assert info.value.key == "trials"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load_config_file(str(tmp_path / "absent.cfg"))


def test_validate_defaults_are_clean():
    assert config.validate() == {}


@pytest.mark.parametrize("override, key", [
    ({"alpha": 0.0}, "alpha"),
    ({"N": 100, "n": 100}, "n"),
    ({"N": 50, "n": 60}, "n"),
    ({"noise": "student", "beta": 2.0}, "beta"),
    ({"powers_db": [5.0]}, "powers_db"),
    ({"powers_db": [0.0, 5.0]}, "powers_db"),
    ({"angles_deg": [10.0, 10.0]}, "angles_deg"),
    ({"groups": [1.0]}, "groups"),
    ({"workers": 0}, "workers"),
    ({"symbols": "bpsk"}, "symbols"),
])
def test_validate_reports_the_offending_key(override, key):
    assert key in config.validate(override)


def test_merge_priority():
    merged = config.merge({"N": 30, "seed": 4}, {"seed": None, "trials": 7})
    assert merged["N"] == 30
    assert merged["seed"] == 4
    assert merged["trials"] == 7
    assert merged["alpha"] == config.DEFAULTS["alpha"]


def test_set_and_reset():
    config.set("fp_tol", 1e-6)
    assert config.get("fp_tol") == 1e-6
    config.reset()
    assert config.get("fp_tol") == config.DEFAULTS["fp_tol"]


def test_environment_overrides_runtime_values(monkeypatch):
    config.set("alpha", 0.5)
    monkeypatch.setenv("RGMUSIC_ALPHA", "0.3")
    assert config.get("alpha") == 0.3
    monkeypatch.setenv("RGMUSIC_ANGLES_DEG", "1, 2, 3")
    assert config.all_config()["angles_deg"] == [1.0, 2.0, 3.0]


def test_format_config_parses_back():
    values = {"N": 20, "angles_deg": [10.0, 12.0], "noise": "student"}
    assert config.parse_config_text(config.format_config(values)) == values


def test_config_hash_is_stable():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_random_streams_are_keyed():
    a = make_rng(7, 3, "noise").standard_normal(4)
    b = make_rng(7, 3, "noise").standard_normal(4)
    c = make_rng(7, 4, "noise").standard_normal(4)
    d = make_rng(7, 3, "tau").standard_normal(4)
    assert (a == b).all()
    assert not (a == c).all()
    assert not (a == d).all()
    with pytest.raises(KeyError):
        make_rng(7, 3, "unknown")


def test_loggers_share_the_package_root():
    log = get_logger("scatter")
    assert log.name == f"{ROOT_NAME}.scatter"
    assert get_logger(f"{ROOT_NAME}.scatter") is log
    root = logging.getLogger(ROOT_NAME)
    assert len(root.handlers) >= 1
    set_log_level(root, "debug")
    assert root.level == logging.DEBUG
    set_log_level(root, "INFO")
