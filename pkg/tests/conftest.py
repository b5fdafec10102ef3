import numpy as np
import pytest

from openpair import (BathSpec, SuperOhmicExpCutoff, SystemSpec, Thermal,
                      br_generator, evolve, exact_moments)

SQ2 = 2**-0.5


@pytest.fixture(scope="session")
def paper_bath():
    """Weak super-Ohmic bath used for the trajectory figures."""
    return BathSpec(SuperOhmicExpCutoff(j0=0.001, omega0=0.9, z=3.0), Thermal(kbt=0.52))


@pytest.fixture(scope="session")
def strong_bath():
    """Same shape at larger density of states (steady-state comparison figure)."""
    return BathSpec(SuperOhmicExpCutoff(j0=0.02, omega0=0.9, z=3.0), Thermal(kbt=0.52))


@pytest.fixture(scope="session")
def fig_sys():
    return SystemSpec(1.0, 0.9, SQ2, SQ2)


@pytest.fixture(scope="session")
def fig_run(paper_bath, fig_sys):
    """Shared long trajectory bundle: exact vs plain time-local equation."""
    times = np.linspace(0.0, 200.0, 8001)
    ex = exact_moments(fig_sys, paper_bath, times)
    g = br_generator(fig_sys, paper_bath)
    tr = evolve(g, np.zeros(4), times)
    return {"times": times, "exact": ex, "br_gen": g, "br_traj": tr}
