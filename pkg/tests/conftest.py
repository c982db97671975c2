# tests/conftest.py
import logging
import os
from typing import AsyncGenerator, Callable

import pytest

from interacting_urns.campaign import CampaignService
from interacting_urns.config import ENV_PREFIX
from interacting_urns.models import ModelParams, RngStream, WeightSequence

logging.getLogger("interacting_urns").setLevel(logging.DEBUG)

# p values where the closed forms are checked
P_GRID = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45]


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch, tmp_path):
    """No URNS_* variables and no stray .env file leak into a test."""
    environ = {key: value for key, value in os.environ.items() if not key.startswith(ENV_PREFIX)}
    monkeypatch.setattr(os, "environ", environ)
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def power() -> WeightSequence:
    return WeightSequence.generalized_power()


@pytest.fixture
def pairwise() -> Callable[..., ModelParams]:
    """Two urns, two colors, infinite weights unless told otherwise."""
    def make(p: float, weights: WeightSequence = None) -> ModelParams:
        return ModelParams(p=p, weights=weights or WeightSequence.generalized_power())
    return make


@pytest.fixture
def rng() -> RngStream:
    return RngStream(seed=20240611, replica_id=0)


@pytest.fixture
async def service() -> AsyncGenerator[CampaignService, None]:
    campaign = CampaignService(workers=1)
    yield campaign
    await campaign.close()
