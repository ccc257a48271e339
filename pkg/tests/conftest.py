from __future__ import annotations

import pytest

from slowfast.manifold import continue_branch, solve_branch_point
from slowfast.pipeline import orbits_at
from slowfast.region import load_region
from slowfast.system import FastSlowSystem

ML_ORBIT_LEVEL = 0.084


@pytest.fixture(scope="session")
def parabola():
    return FastSlowSystem.load("parabola")


@pytest.fixture(scope="session")
def vdp():
    return FastSlowSystem.load("vdp")


@pytest.fixture(scope="session")
def ml():
    return FastSlowSystem.load("morris-lecar")


@pytest.fixture(scope="session")
def repelling():
    return FastSlowSystem.load("repelling")


@pytest.fixture(scope="session")
def circle():
    return FastSlowSystem.load("circle")


@pytest.fixture(scope="session")
def parabola_branch(parabola):
    return continue_branch(parabola, solve_branch_point(parabola, [1.0], [0.9]), (-0.1, 2.2))


@pytest.fixture(scope="session")
def vdp_branch(vdp):
    return continue_branch(vdp, solve_branch_point(vdp, [2 / 3], [2.0]), (-1.2, 1.2))


@pytest.fixture(scope="session")
def ml_branch(ml):
    return continue_branch(ml, solve_branch_point(ml, [-0.05], [-0.58, 0.0]), (-0.06, 0.1))


@pytest.fixture(scope="session")
def repelling_branch(repelling):
    return continue_branch(repelling, solve_branch_point(repelling, [0.0], [0.0]), (-1.5, 1.5))


@pytest.fixture(scope="session")
def ml_orbits(ml):
    """Orbits at the top face of the bundled region, outermost first."""
    return orbits_at(ml, [ML_ORBIT_LEVEL])


@pytest.fixture(scope="session")
def regions():
    return {name: load_region(name) for name in ("vdp_annulus", "morris-lecar", "parabola", "repelling")}
