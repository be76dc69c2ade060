import numpy as np
import pytest

from cdfnet.minn import MinnModel
from cdfnet.targets import TargetSet


def random_model(rng, d, h, blend=False, spread=1.0):
    return MinnModel(
        rng.normal(0, spread, size=(h, d)),
        rng.normal(0, 1, size=h),
        rng.normal(0, spread, size=h),
        rng.normal(),
        rng.normal(0, 2, size=h) if blend else None,
    )


def random_batch(rng, d, n):
    return TargetSet(rng.normal(size=(n, d)), rng.uniform(0, 1, size=n))


def numeric_gradient(f, theta, step=1e-6):
    g = np.empty_like(theta)
    for p in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[p] += step
        down[p] -= step
        g[p] = (f(up) - f(down)) / (2 * step)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        line = f"acceptance {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
