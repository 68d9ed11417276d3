import numpy as np
import pytest

from poroprecond.assembly.system import PoroModel, SystemState
from poroprecond.cases import build_case, generate_staircase
from poroprecond.constitutive import FluidModel, RelPermModel, RockModel
from poroprecond.grid import WellSpec, build_grid
from poroprecond.units import DEFAULT_UNITS as U


def table1_fluids(p_ref=20.0):
    water = FluidModel(1035.0, U.compressibility_from_per_mpa(4.34e-4), U.viscosity_from_cp(0.3),
                       p_ref)
    oil = FluidModel(863.0, U.compressibility_from_per_mpa(1.98e-4), U.viscosity_from_cp(3.0),
                     p_ref)
    return water, oil


def make_model(shape=(3, 3, 3), extent=(30.0, 30.0, 15.0), seed=0, biot=0.8, gravity=True,
               wells=True, tractions=None, dirichlet=None, relperm=(0.2, 0.2), mech_bc=None):
    """Small heterogeneous model with Table-1-like fluids; reference state at 20 MPa."""
    rng = np.random.default_rng(seed)
    g = build_grid(*shape, extent, mech_bc=mech_bc)
    n = g.n_cells
    water, oil = table1_fluids()
    rock = RockModel(5000.0, 0.25, biot, rng.uniform(0.1, 0.3, n), 2650.0)
    perm = rng.uniform(1.0, 1000.0, (n, 3)) * U.perm_from_md(1.0)
    ws = []
    if wells:
        nx, ny, _ = shape
        ws = [WellSpec("inj", g.column(0, 0), "injector", 5.0, 1.0),
              WellSpec("prod", g.column(nx - 1, ny - 1), "producer", -5.0, 1.0)]
    m = PoroModel(g, water, oil, RelPermModel(*relperm), rock, perm,
                  U.gravity if gravity else 0.0, ws, tractions, dirichlet)
    m.ref.p[:] = 20.0
    m.ref.well_datum_p[:] = 20.0
    return m


def random_pair(m, seed=1, dt=0.5):
    """Mid-simulation (state, prev) with mobile saturations."""
    rng = np.random.default_rng(seed)
    nu, nc = m.n_u, m.n_cells
    prev = SystemState(rng.normal(0, 1e-3, nu), rng.uniform(0.3, 0.7, nc),
                       20.0 + rng.normal(0, 0.5, nc), 1.0, 1.0)
    st = SystemState(prev.u + rng.normal(0, 1e-4, nu), rng.uniform(0.3, 0.7, nc),
                     20.0 + rng.normal(0, 0.5, nc), 1.0 + dt, dt)
    return st, prev


@pytest.fixture
def small_model():
    return make_model()


@pytest.fixture(scope="session")
def tiny_case():
    case, _ = generate_staircase(0, 3)
    return case


@pytest.fixture
def tiny_setup(tiny_case):
    return build_case(tiny_case)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(mod.RESULTS, key=lambda c: int(c[1:])):
        terminalreporter.write_line(mod.RESULTS[cid])
