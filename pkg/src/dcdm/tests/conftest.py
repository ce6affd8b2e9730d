import os
import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT))

from dcdm.attention import ShotLayout  # noqa: E402
from dcdm.denoiser import DenoiserConfig, DenoiserParams  # noqa: E402


TEMPLATES = PROJECT / "templates"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def pytest_collection_modifyitems(config, items):
    if os.environ.get("DCDM_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set DCDM_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def templates_dir():
    return TEMPLATES


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def tiny_config():
    """A denoiser small enough for finite differences."""
    return DenoiserConfig(
        channels=2, width=8, heads=2, text_dim=8, time_dim=8, mlp_hidden=16, blocks=2,
        summary_tokens=2,
    )


@pytest.fixture
def tiny_layout():
    """Two shots of two 2x2 frames each."""
    return ShotLayout.from_frames([2, 2], tokens_per_frame=4)


@pytest.fixture
def tiny_params(tiny_config):
    return DenoiserParams.init(tiny_config, seed=3)
