import numpy as np
import pytest

from perfcap.synthetic import make_camera_rig, make_capsule_character


@pytest.fixture(scope="session")
def capsule():
    character, info = make_capsule_character()
    return character, info


@pytest.fixture(scope="session")
def character(capsule):
    return capsule[0]


@pytest.fixture(scope="session")
def rig():
    return make_camera_rig(4, 128)


def seeded(seed):
    return np.random.Generator(np.random.PCG64(seed))
