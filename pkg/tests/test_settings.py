"""
Runtime settings precedence
"""

import pytest

from risage.errors import ConfigError
from risage.settings import DEFAULT_SEED, load_settings


def test_defaults(tmp_path):
    settings = load_settings(str(tmp_path / "missing.env"))
    assert settings.seed == DEFAULT_SEED
    assert settings.workers == 1
    assert settings.mlflow_uri is None


def test_environment_then_flags(monkeypatch, tmp_path):
    monkeypatch.setenv("RISAGE_WORKERS", "3")
    monkeypatch.setenv("RISAGE_SEED", "11")
    settings = load_settings(str(tmp_path / "missing.env"), workers=2)
    assert settings.workers == 2
    assert settings.seed == 11


def test_dotenv_file(monkeypatch, tmp_path):
    env_file = tmp_path / ".env"
    env_file.write_text("RISAGE_SEED=77\nRISAGE_LOG_LEVEL=DEBUG\n", encoding="utf-8")
    settings = load_settings(str(env_file))
    assert settings.seed == 77
    assert settings.log_level == "DEBUG"


def test_environment_wins_over_dotenv(monkeypatch, tmp_path):
    env_file = tmp_path / ".env"
    env_file.write_text("RISAGE_SEED=77\n", encoding="utf-8")
    monkeypatch.setenv("RISAGE_SEED", "5")
    assert load_settings(str(env_file)).seed == 5


def test_invalid_value_names_variable(monkeypatch, tmp_path):
    monkeypatch.setenv("RISAGE_WORKERS", "0")
    with pytest.raises(ConfigError) as info:
        load_settings(str(tmp_path / "missing.env"))
    assert info.value.field == "RISAGE_WORKERS"
