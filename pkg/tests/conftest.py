import numpy as np
import pytest

from handmaps import GridSpec, KeypointSet, SynthesisConfig, default_topology


@pytest.fixture(scope="session")
def topo():
    return default_topology()


@pytest.fixture()
def cfg():
    return SynthesisConfig()


def make_keypoints(rng: np.random.Generator, count: int = 21,
                   low: float = 30.0, high: float = 330.0,
                   visible_prob: float = 1.0) -> KeypointSet:
    """Random annotated hand in input-image coordinates."""
    xy = rng.uniform(low, high, size=(count, 2))
    visible = rng.random(count) < visible_prob
    return KeypointSet(xy, visible)


@pytest.fixture()
def grid():
    return GridSpec()
