import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA_ROOT = Path(os.environ.get("SNN_DATA_DIR", "/root/data"))


def have_dataset(name: str) -> bool:
    sub = {"mnist": "mnist/train-images-idx3-ubyte", "cifar10": "cifar-10-batches-bin/test_batch.bin"}[name]
    return (DATA_ROOT / sub).exists()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def data_root(monkeypatch):
    if not have_dataset("mnist"):
        pytest.skip(f"no datasets under {DATA_ROOT}; run scripts/fetch_data.py")
    monkeypatch.setenv("SNN_DATA_DIR", str(DATA_ROOT))
    return DATA_ROOT
