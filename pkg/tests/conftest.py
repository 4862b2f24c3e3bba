import math

import pytest

from latticewalk.model import LatticeParams, PhaseState

# parameter sets of the published figures: (lam, omega, x0, p0)
FIXTURES = {
    "trap_jump": (1.0, 0.02, 0.0, 0.02),
    "pendulum": (1.0, 0.1, 0.4, 0.0),
    "chaotic": (2.0, 0.8, 0.0, 0.4),
    "mathieu_trap": (1.0, 2.8, 0.2, 0.18),
    "fast_modulation": (1.0, 10.0, 0.2, 0.1),
    "fast_atom": (1.0, 0.1, 0.2, 10.0),
}


def fixture_case(name):
    lam, w, x0, p0 = FIXTURES[name]
    return LatticeParams(lam, w), PhaseState(x0, p0)


@pytest.fixture
def two_pi():
    return 2.0 * math.pi
