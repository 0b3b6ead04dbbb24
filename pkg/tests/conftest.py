import numpy as np
import pytest

from celledproj.imagecore import BinaryImage


def identity(n=4):
    return BinaryImage(np.eye(n, dtype=np.uint8))


def random_image(rng, rows, cols, density=None):
    if density is None:
        density = rng.uniform(0.05, 0.95)
    return BinaryImage((rng.random((rows, cols)) < density).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
