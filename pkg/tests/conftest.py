import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def window():
    from lqgsphere.grids import CylinderGrid

    return CylinderGrid.centered(16.0, 64)


@pytest.fixture
def small_window():
    from lqgsphere.grids import CylinderGrid

    return CylinderGrid.centered(8.0, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# name -> (passed, detail), filled by the acceptance checks
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")

