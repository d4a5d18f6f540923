import dataclasses
from pathlib import Path

import numpy as np
import pytest

from tdenclosure.core import (ConstantImpedance, GridSpec, MediumParams, Obstacle, Pulse, Scenario,
                              SourceSpec, Sphere, TimeSpec)

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# one "[ACCEPTANCE n] PASS|FAIL ..." line per criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def make_scenario(lam=2.0, dx=0.05, T=1.8, center=(1.0, 0.0, 0.0), radius=0.3, eta=0.1,
                  pulse=None, box=None, tau_grid=None, medium=None, obstacle=True):
    """Sphere scenario with B at the origin, a1 = y, a2 = z."""
    pulse = pulse or Pulse("ramp_exp", t_c=0.03)
    srcs = (SourceSpec((0, 0, 0), eta, (0, 1, 0), pulse),
            SourceSpec((0, 0, 0), eta, (0, 0, 1), pulse))
    obst = Obstacle(Sphere(center, radius), ConstantImpedance(lam)) if obstacle else None
    return Scenario(medium or MediumParams(), srcs, obst, GridSpec(dx, box), TimeSpec(T),
                    tau_grid=tau_grid)


@pytest.fixture(scope="session")
def quick_scenario():
    return Scenario.load(SCENARIOS / "quick_sphere.json")


@pytest.fixture(scope="session")
def quick_runs(quick_scenario):
    from tdenclosure.enclosure import simulate_runs

    return simulate_runs(quick_scenario, need_free=True)


@pytest.fixture(scope="session")
def quick_runs_below(quick_scenario):
    from tdenclosure.enclosure import simulate_runs

    sc = quick_scenario.with_obstacle(
        dataclasses.replace(quick_scenario.obstacle, impedance=ConstantImpedance(0.5)))
    return sc, simulate_runs(sc, need_free=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
