import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from prismghz.continuous import solve_densities  # noqa: E402
from prismghz.discrete import default_model  # noqa: E402

REFERENCE_DELTA = 0.9 * math.pi / 3


@pytest.fixture(scope="session")
def model48():
    return default_model()


@pytest.fixture(scope="session")
def reference_solution():
    return solve_densities(REFERENCE_DELTA, grid_n=1024, tol=1e-3)


def pytest_terminal_summary(terminalreporter):
    from _criteria import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(RESULTS, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
