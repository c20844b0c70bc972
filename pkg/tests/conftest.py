import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from normalforge.core import CameraIntrinsics, DepthImage  # noqa: E402
from oracles import plane_depth  # noqa: E402

# Slanted plane used by the exactness checks: n ~ [-0.2, -0.1, -1], offset 2 m.
PLANE_NORMAL = np.array([-0.2, -0.1, -1.0]) / np.linalg.norm([-0.2, -0.1, -1.0])
PLANE_OFFSET = 2.0 / np.linalg.norm([-0.2, -0.1, -1.0])

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def K():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


@pytest.fixture(scope="session")
def plane_frame(K):
    z = plane_depth(PLANE_NORMAL, PLANE_OFFSET, K.fx, K.fy, K.u0, K.v0, 480, 640)
    return DepthImage(z), PLANE_NORMAL


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
