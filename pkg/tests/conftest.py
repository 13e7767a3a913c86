import time

import pytest

from bvlab.bv import Grid1D
from bvlab.integrand import NonAutonomousIntegrand
from bvlab.viscosity import ViscosityConfig, run_sequence

ACCEPTANCE = {}


def record(n, passed, detail):
    """Store the outcome of acceptance criterion ``n`` for the summary."""
    ACCEPTANCE[str(n)] = (bool(passed), detail)
    print(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


_RUNS = {}


def viscosity_run(mu, alpha=0.25, M=20.0, exp=14, k_max=512, verify=True):
    """Cached sequence; returns (F, cfg, states, wall seconds)."""
    key = (mu, alpha, M, exp, k_max, verify)
    if key not in _RUNS:
        grid = Grid1D.dyadic(exp)
        F = NonAutonomousIntegrand.example(mu, alpha)
        cfg = ViscosityConfig(grid, (0.0, M), k_max=k_max, verify=verify)
        t0 = time.perf_counter()
        states = run_sequence(F, cfg)
        _RUNS[key] = (F, cfg, states, time.perf_counter() - t0)
    return _RUNS[key]


@pytest.fixture(scope="session")
def fig1_run():
    return viscosity_run(1.4)


@pytest.fixture(scope="session")
def sobolev_run():
    return viscosity_run(1.1)
