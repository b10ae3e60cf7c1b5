import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from nimo.mlp import NetworkConfig  # noqa: E402
from nimo.numerics import SeededRng, standardize  # noqa: E402
from nimo.optimize import TrainingData  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def seeded() -> SeededRng:
    return SeededRng(7, stream=0)


@pytest.fixture
def tiny_cfg() -> NetworkConfig:
    return NetworkConfig(input_dim=3, hidden1=4, hidden2=3)


@pytest.fixture
def linear_data(rng: np.random.Generator) -> TrainingData:
    X, stats = standardize(rng.uniform(-2, 2, (60, 3)))
    y = X @ np.array([1.5, -2.0, 0.0]) + 0.01 * rng.standard_normal(60)
    return TrainingData(X=X, y=y, stats=stats)
