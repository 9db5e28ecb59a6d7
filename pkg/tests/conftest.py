import numpy as np
import pytest

from mnflow.imagecore import Image
from mnflow.synthetic import shifted_pair


@pytest.fixture(scope="session")
def pair64():
    """Noiseless 64x64 textured pair, frame_k = frame_km1 shifted by (1, 0)."""
    return shifted_pair(64, (1, 0), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ramp(width=8, height=6, axis=0):
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    return Image(xs / (width - 1) if axis == 0 else ys / (height - 1))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
