import pytest

from becsim.grid import build_grid
from becsim.initdata import InitialSpec, prepare
from becsim.solver import SolverConfig, run


@pytest.fixture(scope="session")
def grid400():
    return build_grid(1e-3, 400)


@pytest.fixture(scope="session")
def condensing_run(grid400):
    """Constant 2 (photon number 2) to t = 5."""
    n0 = prepare(InitialSpec("constant", {"c": 2.0}), grid400)
    return run(n0, grid400, SolverConfig(t_end=5.0, output_every=0.1))



def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance lines in the summary so they survive output capture."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(lines):
            terminalreporter.write_line(lines[cid])
        for line in getattr(mod, "CONTROLS", []):
            terminalreporter.write_line(line)
