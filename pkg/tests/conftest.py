import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skywatch.simgen import GenConfig


@pytest.fixture
def small_cfg() -> GenConfig:
    return GenConfig(cameras=2, stars_per_camera=300, cycles=40,
                     transient_mean_per_cycle=1.0, seed=11)


@pytest.fixture
def single_cam_cfg() -> GenConfig:
    return GenConfig(cameras=1, stars_per_camera=500, cycles=30,
                     transient_mean_per_cycle=0.5, seed=5)
