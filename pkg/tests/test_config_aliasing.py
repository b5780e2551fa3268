import pytest
from pydantic import ValidationError

from src.config import Settings, get_settings


def test_results_database_url_takes_priority(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setenv("RESULTS_DATABASE_URL", "sqlite:///primary.db")
    monkeypatch.setenv("DATABASE_URL", "sqlite:///fallback.db")
    get_settings.cache_clear()

    settings = get_settings()

    assert settings.RESULTS_DATABASE_URL == "sqlite:///primary.db"
    get_settings.cache_clear()


def test_database_url_alias_is_accepted(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv("RESULTS_DATABASE_URL", raising=False)
    monkeypatch.setenv("DATABASE_URL", "sqlite:///fallback.db")
    get_settings.cache_clear()

    settings = get_settings()

    assert settings.RESULTS_DATABASE_URL == "sqlite:///fallback.db"
    get_settings.cache_clear()


def test_persistence_defaults_to_disabled(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv("RESULTS_DATABASE_URL", raising=False)
    monkeypatch.delenv("DATABASE_URL", raising=False)
    get_settings.cache_clear()

    settings = get_settings()

    assert settings.RESULTS_DATABASE_URL is None
    assert settings.non_secret_dict()["RESULTS_DATABASE_ENABLED"] is False
    assert "RESULTS_DATABASE_URL" not in settings.non_secret_dict()
    get_settings.cache_clear()


def test_numeric_settings_read_from_environment(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setenv("THREADS", "4")
    monkeypatch.setenv("fixed_point_tol", "1e-12")
    get_settings.cache_clear()

    settings = get_settings()

    assert settings.THREADS == 4
    assert settings.FIXED_POINT_TOL == 1e-12
    get_settings.cache_clear()


@pytest.mark.parametrize(
    "overrides",
    [
        {"THREADS": 0},
        {"POWER_TOL": 0.0},
        {"GW_POP_CAP": 0},
        {"ANNEAL_T_START": 1e-5, "ANNEAL_T_END": 1e-4},
    ],
)
def test_settings_validators(overrides):
    with pytest.raises(ValidationError):
        Settings(**overrides)
