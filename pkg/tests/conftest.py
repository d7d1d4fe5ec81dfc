import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

sys.path.insert(0, str(ROOT / "src"))


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS
