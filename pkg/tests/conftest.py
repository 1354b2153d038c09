import warnings

import numpy as np
import pytest

from kitchenr.world import GridMap, Pose2D, default_distribution, default_scene, support_heights

# The default controller parameters trip a (correct) warning about the
# unreachable deceleration branch; keep test output clean.
warnings.filterwarnings("ignore", message="decel_v_trigger")


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def params(scene):
    return default_distribution(seed=12345, scene=scene)


@pytest.fixture(scope="session")
def heights(scene):
    return support_heights(scene)


def random_grid(rng, size=16, density=0.2, resolution=0.1):
    cells = rng.random((size, size)) < density
    return GridMap(resolution, size, size, Pose2D(0.0, 0.0, 0.0), cells)
