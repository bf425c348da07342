import numpy as np
import pytest

from nftrack.core import CameraIntrinsics, GrayImage
from nftrack.harness import DEFAULT_INTRINSICS, make_default_target


@pytest.fixture(scope="session")
def default_target():
    return make_default_target()


@pytest.fixture(scope="session")
def intrinsics() -> CameraIntrinsics:
    return DEFAULT_INTRINSICS


@pytest.fixture
def textured_image():
    """64x64 blocky random texture with plenty of corners."""
    rng = np.random.default_rng(7)
    tex = rng.integers(0, 256, (8, 8), dtype=np.uint8)
    return GrayImage(np.kron(tex, np.ones((8, 8), dtype=np.uint8)))
