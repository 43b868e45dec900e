import numpy as np
import pytest

from logtrace.segmentation import extract_patch
from logtrace.synthgen import generate_samples

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_samples():
    """8 logs x 2 ends x 3 acquisitions of 128 px studio images."""
    return generate_samples(8, 3, "S", seed=11, image_size=128)


@pytest.fixture(scope="session")
def small_patches(small_samples):
    return [(acq, extract_patch(im, gt.mask, source_id=str(acq))) for acq, im, gt in small_samples]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
