"""Invariant checks runnable on any case (``poroprecond check``)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly.system import SystemState, row_scale
from .grid import SIDES
from .linalg import gmres
from .precond.stack import PrecondOptions, PreconditionerStack
from .solver import initialize_equilibrium


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def perturbed_state(model, base: SystemState, rng, dt: float = 0.5) -> tuple:
    """A generic mid-simulation state pair ``(state, prev)`` near ``base``.

    Saturations are drawn inside the mobile range so both phases flow and
    upwind directions are well defined.
    """
    rp = model.relperm
    lo, hi = rp.s_wr + 0.05, 1.0 - rp.s_nwr - 0.05
    nc = model.n_cells
    scale_p = max(1e-3, 0.02 * float(np.abs(base.p).mean()))
    prev = SystemState(base.u + rng.normal(0, 1e-5, base.u.size), rng.uniform(lo, hi, nc),
                       base.p + rng.normal(0, scale_p, nc), 1.0, 1.0)
    state = SystemState(prev.u + rng.normal(0, 1e-5, base.u.size), rng.uniform(lo, hi, nc),
                        prev.p + rng.normal(0, scale_p, nc), 1.0 + dt, dt)
    return state, prev


def fd_jacobian_error(model, state, prev, n_dir: int = 20, rng=None, h: float = 1e-4):
    """Largest relative error between central differences and ``J v``.

    Directions have block magnitudes 1e-4 (u), 1e-2 (s) and 1e-1 * mean|p|
    scale so each block contributes.
    """
    rng = rng or np.random.default_rng(0)
    _, J, _ = model.assemble(state, prev, True)
    x = state.vector()
    nu, nc = model.n_u, model.n_cells
    ps = max(1e-3, 0.01 * float(np.abs(state.p).mean()))
    worst = 0.0
    for _ in range(n_dir):
        v = np.concatenate([rng.normal(0, 1e-4, nu), rng.normal(0, 1e-2, nc),
                            rng.normal(0, ps, nc)])
        rp = model.assemble(state.with_vector(x + h * v), prev, False)[0].vector()
        rm = model.assemble(state.with_vector(x - h * v), prev, False)[0].vector()
        fd = (rp - rm) / (2 * h)
        Jv = J.matvec(v)
        worst = max(worst, float(np.linalg.norm(fd - Jv) / np.linalg.norm(Jv)))
    return worst


def face_closure_error(grid) -> float:
    """max over cells of |sum_f |f| n_f| relative to a face area."""
    acc = np.zeros((grid.n_cells, 3))
    K, L = grid.face_cells[:, 0], grid.face_cells[:, 1]
    n = np.zeros((K.size, 3))
    n[np.arange(K.size), grid.face_axis] = 1.0
    an = grid.face_area[:, None] * n
    np.add.at(acc, K, an)
    np.add.at(acc, L, -an)
    np.add.at(acc, grid.bface_cell, grid.bface_area[:, None] * grid.bface_normal)
    return float(np.abs(acc).max() / grid.face_area.max() if K.size else
                 np.abs(acc).max() / grid.bface_area.max())


def run_checks(setup, seed: int = 0, n_dir: int = 20) -> list[CheckResult]:
    """Grid, discretization and solver invariants for one case setup."""
    model = setup.model
    grid = model.grid
    rng = np.random.default_rng(seed)
    out = []

    err = face_closure_error(grid)
    out.append(CheckResult("face-normal closure", err < 1e-12, f"max {err:.2e}"))

    T, _ = grid.transmissibilities(model.perm)
    T2, _ = grid.transmissibilities(3.0 * model.perm)
    sc = float(np.abs(T2 - 3.0 * T).max() / max(np.abs(T).max(), 1e-300))
    out.append(CheckResult("transmissibility scaling", sc < 1e-13, f"max rel dev {sc:.1e}"))

    ini = setup.case.initial
    s0 = setup.case.relperm.s_wr if ini.saturation is None else ini.saturation
    state0 = initialize_equilibrium(model, setup.units.pressure_from_mpa(ini.datum_pressure),
                                    s0, ini.datum_elevation, ini.equilibrium_phase,
                                    ini.geostatic, setup.linear.mech
                                    if model.n_u > 3000 else None)
    layers = state0.p.reshape(grid.nz, -1)
    spread = float(np.abs(layers - layers[:, :1]).max())
    out.append(CheckResult("hydrostatic layers", spread == 0.0, f"max spread {spread:.1e}"))

    s1 = state0.copy()
    s1.t = s1.dt = setup.controls.dt0
    r0 = model.assemble(s1, state0, False)[0]
    f_grav = np.abs(model.assemble(SystemState(np.zeros(model.n_u), state0.s, state0.p,
                                               s1.t, s1.dt), state0, False)[0].r_u).max()
    mom = float(np.abs(r0.r_u).max() / max(f_grav, 1e-300))
    # well terms only enter perforated rows; the rest must be at rest
    rest = np.ones(model.n_cells, dtype=bool)
    rest[model.conn_cell] = False
    mass = model.mass(state0)
    flow = float(max(np.abs(r0.r_s[rest]).max(initial=0.0) / mass[0].max(),
                     np.abs(r0.r_p[rest]).max(initial=0.0) / mass[1].max()))
    out.append(CheckResult("equilibrium momentum residual", mom < 1e-8, f"relative {mom:.1e}"))
    out.append(CheckResult("equilibrium flow residual", flow < 1e-10, f"relative {flow:.1e}"))

    state, prev = perturbed_state(model, state0, rng, dt=setup.controls.dt0)
    e = fd_jacobian_error(model, state, prev, n_dir, rng)
    out.append(CheckResult("Jacobian vs finite differences", e < 1e-6,
                           f"max rel err {e:.1e} over {n_dir} directions"))

    # solver checks use the first time step's system, a state the time loop
    # actually produces
    res, J, _ = model.assemble(s1, state0, True)
    sj, sr, _ = row_scale(J, res)
    opts = PrecondOptions(**{**setup.linear.options.__dict__, "record": True})
    stack = PreconditionerStack.build(sj, model, s1, setup.linear.mech, opts)
    g = gmres(sj, stack.apply, -sr.vector(), 1e-6, 200, 500)
    out.append(CheckResult("preconditioned GMRES", g.converged,
                           f"{g.iterations} iterations, relres {g.relres:.1e}"))
    ratio = max(stack.diag.second_stage_ratio)
    out.append(CheckResult("second stage reduces residual", ratio <= 1.0,
                           f"max ratio {ratio:.3f}"))
    n = sj.shape[0]
    if n <= 3000:
        ex = PreconditionerStack.exact(sj)
        g = gmres(sj, ex.apply, -sr.vector(), 1e-12, 200, 50)
        out.append(CheckResult("exact-limit GMRES", g.iterations <= 3,
                               f"{g.iterations} iterations, relres {g.relres:.1e}"))
    else:
        out.append(CheckResult("exact-limit GMRES", True, f"skipped ({n} unknowns > 3000)"))
    bad = [s for s in SIDES if grid.mech_bc[s] not in ("roller", "free", "fixed")]
    out.append(CheckResult("mechanics boundary tags", not bad, "ok" if not bad else str(bad)))
    return out
