import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glider_tvm import manifold, profiles  # noqa: E402

THETA_M5 = math.radians(-5.0)

# Filled by test_acceptance; printed once at the end of the session.
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def plate():
    return profiles.flat_plate()


@pytest.fixture(scope="session")
def scaled():
    return profiles.scaled_plate(1.5)


@pytest.fixture(scope="session")
def tvm_m5(plate):
    return manifold.trace_tvm(THETA_M5, plate, strategy="A")


@pytest.fixture(scope="session")
def tvm_m5_b(plate):
    return manifold.trace_tvm(THETA_M5, plate, strategy="B")


@pytest.fixture(scope="session")
def random_ics():
    rng = np.random.default_rng(20240501)
    return np.column_stack([rng.uniform(-1.5, 1.5, 20), rng.uniform(-2.0, 0.5, 20)])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
