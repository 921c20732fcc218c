"""Shared fixtures; puts simulator/ on sys.path so ``import zenolab`` works from the repo root."""
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "simulator"))

from zenolab.config import get_settings  # noqa: E402

CONFIG_DIR = ROOT / "simulator" / "configs"


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    """Settings are cached; drop the cache so env overrides in a test take effect."""
    for name in ("ZENOLAB_BRANCH_CAP", "ZENOLAB_SWEEP_WORKERS", "ZENOLAB_SHOW_PROGRESS", "ZENOLAB_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR
