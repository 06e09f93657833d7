"""Pytest configuration for test environment setup.

- Forces ``DISABLE_FILE_LOGS=1`` to avoid writing log files during tests.
- Ensures the project root is available on ``sys.path`` for imports.
- Provides the published clock-sweep points and synthetic traces.
"""

import os
import sys

os.environ.setdefault("DISABLE_FILE_LOGS", "1")  # Avoid creating log files during tests
from pathlib import Path

import pytest

# Ensure project root is on sys.path
ROOT = Path(__file__).resolve().parents[1]
root_str = str(ROOT)
if root_str not in sys.path:
    sys.path.insert(0, root_str)

from src.sweep import SweepPoint, load_points_csv  # noqa: E402
from src.telemetry import SynthSpec, SyntheticTrace, synth_trace  # noqa: E402


@pytest.fixture
def reference_points() -> list[SweepPoint]:
    """The 14 published full-node sweep points (810 to 1395 MHz)."""
    return load_points_csv()


@pytest.fixture
def synthetic_node() -> list[SyntheticTrace]:
    """Four default synthetic GPUs: 60 W idle, 300 W for 200 s."""
    return [synth_trace(SynthSpec(gpu_index=g, seed=g)) for g in range(4)]

