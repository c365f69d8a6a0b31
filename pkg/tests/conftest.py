import math

import pytest

from hierglass.disorder import DisorderKey, DisorderOracle, ModelTag, SeedStream, with_values, zero_override
from hierglass.schemas import ModelParams

LOG2 = math.log(2.0)


def hrem(depth, sigma=1.0, beta=1.0):
    return ModelParams(kind="hrem", depth=depth, sigma=sigma, beta=beta)


def hps(depth, sigma=1.0, beta=1.0, p=3, field_strength=1.0):
    return ModelParams(kind="hps", depth=depth, sigma=sigma, beta=beta, p=p, field_strength=field_strength)


def pinned(params, values, seed=1):
    """Oracle that is zero everywhere except the given {(tag, level, block, local): value}."""
    keys = {DisorderKey(ModelTag(t), l, b, i): v for (t, l, b, i), v in values.items()}
    return with_values(zero_override(DisorderOracle(seed, params)), keys)


@pytest.fixture
def seeds():
    return SeedStream(20240101)


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "run"
