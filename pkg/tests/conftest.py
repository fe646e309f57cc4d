import numpy as np
import pytest

from gpdepth.depthmap import DepthMap, SparsePointSet, TrainingSet

ACCEPTANCE_LINES = []


@pytest.fixture
def accept():
    """Record one acceptance line: ``accept(criterion, passed, detail)``; ``passed=None`` is a skip."""
    def record(criterion, passed, detail=""):
        tag = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{tag}] {criterion}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_depth_map(rng, width, height, invalid_frac=0.2, lo=2.0, hi=20.0):
    values = rng.uniform(lo, hi, (height, width))
    valid = rng.random((height, width)) >= invalid_frac
    return DepthMap(np.where(valid, values, 0.0), valid)


def random_sparse(rng, width, height, n, lo=2.0, hi=20.0):
    idx = rng.choice(width * height, size=n, replace=False)
    return SparsePointSet(idx % width, idx // width, rng.uniform(lo, hi, n), (width, height))


def random_training_set(rng, n, extent=10.0, noise=(0.05, 0.001)):
    x = rng.uniform(0, extent, (n, 2))
    y = rng.uniform(3.0, 8.0, n)
    s = rng.choice(noise, n)
    return TrainingSet(x, y, s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
