from __future__ import annotations

import pytest

from simukit.config import Config, load_config, parse_config_text
from simukit.errors import ConfigError

from conftest import KB_PATH


def test_defaults():
    cfg = load_config(env={})
    assert cfg == Config()
    assert (cfg.limits.max_review, cfg.limits.max_build) == (3, 5)


def test_file_env_flag_precedence(tmp_path):
    (tmp_path / "kb.md").write_text(KB_PATH.read_text())
    conf = tmp_path / "simukit.conf"
    conf.write_text(
        "# settings\nkb = kb.md\nmatlab = matlab-r2024\nmax-review = 4\nmodel.UnitTestReviewer = small\n"
    )
    cfg = load_config(str(conf), env={})
    assert cfg.kb == str(tmp_path / "kb.md")
    assert cfg.max_review == 4 and cfg.role_models == {"UnitTestReviewer": "small"}
    cfg = load_config(str(conf), env={"SIMUKIT_MATLAB": "/opt/matlab"})
    assert cfg.matlab == "/opt/matlab"
    cfg = load_config(str(conf), env={"SIMUKIT_MATLAB": "/opt/matlab"}, overrides={"matlab": "m2", "kb": None})
    assert cfg.matlab == "m2" and cfg.kb == str(tmp_path / "kb.md")


def test_config_from_env_variable(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("endpoint = http://x\n")
    assert load_config(env={"SIMUKIT_CONFIG": str(conf)}).endpoint == "http://x"


def test_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("nonsense\n")
    with pytest.raises(ConfigError):
        parse_config_text("colour = blue\n")
    with pytest.raises(ConfigError):
        parse_config_text("max_build = many\n")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.conf"), env={})
    with pytest.raises(ConfigError):
        load_config(env={"SIMUKIT_KB": str(tmp_path / "nope.md")})
    with pytest.raises(ConfigError):
        load_config(env={}, overrides={"max_build": 0})
    with pytest.raises(ConfigError):
        load_config(env={}, overrides={"timeout": -1.0})
