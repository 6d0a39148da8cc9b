import os

import numpy as np
import pytest
import torch

from apps.imaging.files import save_image
from apps.networks.bundle import build_bundle
from apps.networks.config import ModelConfig


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SR_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set SR_RUN_SLOW=1 to run desk-scale experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def image(rng):
    return rng.random((12, 12, 3))


@pytest.fixture
def tiny_model_cfg():
    return ModelConfig.tiny(scale=2, channels=8, groups=1, rcabs=1, blocks=1)


@pytest.fixture
def tiny_bundle(tiny_model_cfg):
    torch.manual_seed(0)
    return build_bundle(tiny_model_cfg)


@pytest.fixture
def hr_sources(tmp_path, rng):
    """Six smooth-ish 32×32 HR PNGs."""
    source = tmp_path / "sources"
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    for number in range(6):
        phase = rng.random(3)
        img = 0.5 + 0.4 * np.sin(2 * np.pi * (xx[..., None] * (number + 1) / 3 + yy[..., None] / 2 + phase))
        save_image(source / f"img{number:02d}.png", img)
    return source
