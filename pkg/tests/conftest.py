import numpy as np
import pytest

from fptdensity import (FlowMap, MovingDomain, SolverConfig, SourceSpec,
                        circle, solve, zero_field)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: heavy end-to-end runs (Monte Carlo at full size)")


@pytest.fixture(scope="session")
def static_disk():
    return MovingDomain(boundary=circle(1.0), marker=(0.0, 0.0),
                        flow=FlowMap(zero_field()), horizon=1.0)


@pytest.fixture(scope="session")
def disk_solution_coarse(static_disk):
    """Static unit disk, center start, dt = 5e-3: the module-test workhorse."""
    cfg = SolverConfig(dt=5e-3, nodes=64, time_rule="corrected")
    return solve(static_disk, SourceSpec.point((0.0, 0.0)), cfg)


@pytest.fixture(scope="session")
def disk_solution_fine(static_disk):
    """Acceptance-resolution solve (dt = 1e-3, M = 64) with its wall time."""
    import time
    cfg = SolverConfig(dt=1e-3, nodes=64, time_rule="corrected")
    t0 = time.perf_counter()
    sol = solve(static_disk, SourceSpec.point((0.0, 0.0)), cfg)
    return sol, time.perf_counter() - t0


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
