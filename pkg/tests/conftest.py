import sys
from pathlib import Path

import pytest
import torch
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from mocolsk.config import NetworkConfig
from mocolsk.data import RasterDataset, synthesize_dataset, synthesize_samples

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("data") / "set"
    synthesize_dataset(root, count=12, hr_size=32, scale=4, seed=11)
    return root


@pytest.fixture(scope="session")
def dataset(dataset_dir) -> RasterDataset:
    return RasterDataset(dataset_dir)


@pytest.fixture(scope="session")
def scenes():
    return synthesize_samples(count=10, hr_size=16, scale=2, seed=5)


@pytest.fixture()
def micro_cfg() -> NetworkConfig:
    return NetworkConfig(
        scale=2, stages=2, base_dim=8, blocks_per_group=1,
        attention_reduction=4, guidance_channels=3, dmlp_hidden=8,
    )
