import pytest

from src.config.settings import Settings


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture(autouse=True)
def _isolated_output(tmp_path, monkeypatch):
    monkeypatch.setenv("SBRL_OUTPUT_ROOT", str(tmp_path / "results"))
