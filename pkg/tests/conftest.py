import numpy as np
import pytest

from varsobolev.gridlab import build_grid


@pytest.fixture
def square64():
    return build_grid(2, [-1.0, -1.0], [2.0, 2.0], [64, 64])


@pytest.fixture
def half_grid():
    return build_grid(2, [0.0, -1.0], [1.0, 2.0], [40, 80], half_space_axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one summary line each at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
