import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hosmo import aircraft  # noqa: E402
from hosmo.normalform import transform  # noqa: E402
from hosmo.sim import simulate  # noqa: E402


@pytest.fixture(scope="session")
def plant():
    return aircraft.system()


@pytest.fixture(scope="session")
def nf(plant):
    return transform(plant)


@pytest.fixture(scope="session")
def estimation_run():
    """Full-horizon state-estimation run of the bundled scenario and its wall time."""
    t0 = time.perf_counter()
    trace = simulate(aircraft.observer_scenario())
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def estimation_trace(estimation_run):
    return estimation_run[0]


@pytest.fixture(scope="session")
def reconstruction_trace():
    """Full-horizon closed-loop input-reconstruction run."""
    return simulate(aircraft.reconstruction_scenario(closed_loop=True))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, title, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}")
        terminalreporter.write_line(f"    {detail}")
