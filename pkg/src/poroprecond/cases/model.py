"""Turn a :class:`CaseConfig` into a discrete model, initial state and solvers."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..assembly.system import PoroModel, SystemState
from ..constitutive import FluidModel, RelPermModel, RockModel
from ..grid import StructuredGrid, WellSpec, build_grid
from ..precond.stack import PrecondOptions
from ..solver import (ForcingParams, LinearParams, LinearSolver, NewtonParams,
                      SimulationResult, TimestepControl, initialize_equilibrium, time_loop)
from ..units import UnitSystem
from .config import CaseConfig
from .raster import RasterError, load_raster, read_regions

PRESSURE_PA = {"Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9, "bar": 1e5}
TIME_S = {"s": 1.0, "hour": 3600.0, "day": 86400.0}


def unit_system(case: CaseConfig) -> UnitSystem:
    return UnitSystem(pressure=PRESSURE_PA[case.units.pressure], mass=1.0,
                      time=TIME_S[case.units.time])


@dataclass
class CaseSetup:
    """A ready-to-run case: discrete model plus solver configuration."""

    case: CaseConfig
    units: UnitSystem
    grid: StructuredGrid
    model: PoroModel
    regions: np.ndarray
    linear: LinearSolver
    newton: NewtonParams
    forcing: ForcingParams
    controls: TimestepControl


def cell_regions(case: CaseConfig) -> np.ndarray:
    g = case.grid
    n = g.nx * g.ny * g.nz
    if case.region_override is not None:
        ids = np.asarray(case.region_override, dtype=np.int64)
        if ids.size != n:
            raise ValueError(f"region map has {ids.size} entries, grid has {n} cells")
        return ids
    if case.fields.regions is None:
        return np.full(n, case.regions[0].id, dtype=np.int64)
    return read_regions(case.resolve(case.fields.regions), g.nx, g.ny, g.nz,
                        source_shape=case.fields.source_shape,
                        crop_offset=case.fields.crop_offset)


def raster_fields(case: CaseConfig, perm_md, phi0):
    """Apply permeability [mD] and porosity rasters (or in-memory overrides)."""
    g = case.grid
    f = case.fields
    crop = dict(source_shape=f.source_shape, crop_offset=f.crop_offset)
    if case.perm_override is not None:
        perm_md = np.asarray(case.perm_override, dtype=float).reshape(-1, 3)
    elif f.perm is not None:
        path = case.resolve(f.perm)
        try:
            perm_md = load_raster(path, g.nx, g.ny, g.nz, components=3, **crop)
        except RasterError:
            perm_md = np.repeat(load_raster(path, g.nx, g.ny, g.nz, **crop)[:, None], 3, axis=1)
    if case.porosity_override is not None:
        phi0 = np.asarray(case.porosity_override, dtype=float)
    elif f.porosity is not None:
        phi0 = load_raster(case.resolve(f.porosity), g.nx, g.ny, g.nz, threshold=f.threshold,
                           **crop)
    return perm_md, phi0


def _refine_cells(values, shape, r):
    nx, ny, nz = shape
    v = np.asarray(values)
    extra = v.shape[1:]
    cube = v.reshape((nz, ny, nx) + extra)
    for ax in range(3):
        cube = np.repeat(cube, r, axis=ax)
    return cube.reshape((-1,) + extra)


def refine_case(case: CaseConfig, levels: int) -> CaseConfig:
    """Split every cell into ``2^levels`` per axis.

    Fine cells inherit region, permeability and porosity from their parent;
    well columns map to the refined column at the parent's lower corner.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if levels == 0:
        return case
    r = 2 ** levels
    c = copy.deepcopy(case)
    g = case.grid
    shape = (g.nx, g.ny, g.nz)
    c.region_override = _refine_cells(cell_regions(case), shape, r)
    if case.fields.perm is not None or case.perm_override is not None:
        perm, _ = raster_fields(case, None, None)
        c.perm_override = _refine_cells(perm, shape, r)
    if case.fields.porosity is not None or case.porosity_override is not None:
        _, phi = raster_fields(case, None, None)
        c.porosity_override = _refine_cells(phi, shape, r)
    c.grid.nx, c.grid.ny, c.grid.nz = g.nx * r, g.ny * r, g.nz * r
    for w in c.wells:
        w.i, w.j, w.k0 = w.i * r, w.j * r, w.k0 * r
        if w.k1 is not None:
            w.k1 = (w.k1 + 1) * r - 1
    c.name = f"{case.name}_r{levels}"
    return c


def build_case(case: CaseConfig, units: UnitSystem | None = None) -> CaseSetup:
    """Convert units, assign per-cell properties and assemble the static model.

    Raises:
        ValueError: for regions missing from the case or bad raster contents.
    """
    U = units or unit_system(case)
    g = case.grid
    grid = build_grid(g.nx, g.ny, g.nz, g.extent, g.origin, case.mechanics.bc)
    n = grid.n_cells
    regions = cell_regions(case)
    by_id = {r.id: r for r in case.regions}
    unknown = sorted(set(np.unique(regions).tolist()) - set(by_id))
    if unknown:
        raise ValueError(f"region ids {unknown} used by the map but not defined")

    def per_cell(attr):
        table = np.zeros(max(by_id) + 1 if by_id else 1)
        for rid, r in by_id.items():
            table[rid] = getattr(r, attr)
        return table[regions]

    perm_md = np.zeros((n, 3))
    for rid, r in by_id.items():
        perm_md[regions == rid] = r.perm
    phi0 = per_cell("porosity")
    perm_md, phi0 = raster_fields(case, perm_md, phi0)
    rock = RockModel(U.modulus_from_mpa(per_cell("youngs_modulus")), per_cell("poisson"),
                     per_cell("biot"), phi0, U.density_from_kgm3(per_cell("grain_density")))
    p_datum = case.initial.datum_pressure

    def fluid(spec):
        p_ref = spec.reference_pressure if spec.reference_pressure is not None else p_datum
        return FluidModel(U.density_from_kgm3(spec.density),
                          U.compressibility_from_per_mpa(spec.compressibility),
                          U.viscosity_from_cp(spec.viscosity), U.pressure_from_mpa(p_ref))

    wells = []
    for w in case.wells:
        k1 = g.nz - 1 if w.k1 is None else w.k1
        cells = grid.column(w.i, w.j, w.k0, k1 + 1)
        wells.append(WellSpec(w.name, cells, w.role, U.pressure_from_mpa(w.delta_bhp),
                              U.time_from_day(w.ramp), w.radius, w.skin, w.inject_phase,
                              w.reference_elevation))
    tractions = {s: tuple(U.pressure_from_mpa(np.asarray(v, dtype=float)))
                 for s, v in case.mechanics.tractions.items()}
    gravity = U.gravity if case.initial.gravity else 0.0
    model = PoroModel(grid, fluid(case.wetting), fluid(case.nonwetting),
                      RelPermModel(case.relperm.s_wr, case.relperm.s_nwr), rock,
                      U.perm_from_md(perm_md), gravity, wells, tractions or None)
    pc = case.precond
    opts = PrecondOptions(cpr_mode=pc.cpr_mode, second_stage=pc.second_stage,
                          bgs_sweeps=pc.bgs_sweeps, amg_strength=pc.amg_strength,
                          amg_max_coarse=pc.amg_max_coarse, mech_amg=pc.mech_amg,
                          fs_modulus_scale=pc.fs_modulus_scale, rsl_tol=pc.rsl_tol)
    lp = case.linear
    linear = LinearSolver(model, opts, LinearParams(lp.method, lp.restart, lp.max_iter,
                                                    lp.compare_richardson,
                                                    lp.richardson_max_iter))
    nt = case.newton
    newton = NewtonParams(nt.tol, nt.max_iter, nt.max_backtracks, nt.sufficient_decrease)
    fc = case.forcing
    forcing = ForcingParams(fc.enabled, fc.gamma, fc.omega, fc.eta0, lp.tol)
    t = case.time
    controls = TimestepControl(U.time_from_day(t.dt_initial), U.time_from_day(t.dt_max),
                               t.growth, U.time_from_day(t.end), t.cut, t.max_cuts)
    return CaseSetup(case, U, grid, model, regions, linear, newton, forcing, controls)


def initial_state(setup: CaseSetup) -> SystemState:
    """Hydrostatic/geostatic equilibrium at the case datum."""
    ini = setup.case.initial
    s0 = setup.case.relperm.s_wr if ini.saturation is None else ini.saturation
    mech = setup.linear.mech if ini.geostatic and setup.model.n_u > 3000 else None
    return initialize_equilibrium(setup.model, setup.units.pressure_from_mpa(ini.datum_pressure),
                                  s0, ini.datum_elevation, ini.equilibrium_phase,
                                  ini.geostatic, mech)


def run_case(setup: CaseSetup, state0: SystemState | None = None, callback=None,
             t_end: float | None = None) -> SimulationResult:
    """Initialize (unless ``state0`` is given) and run the time loop.

    Args:
        t_end: optional end time in days overriding the case.
    """
    state = state0 if state0 is not None else initial_state(setup)
    controls = setup.controls
    if t_end is not None:
        controls = TimestepControl(controls.dt0, controls.dt_max, controls.growth,
                                   setup.units.time_from_day(t_end), controls.cut,
                                   controls.max_cuts)
    return time_loop(setup.model, state, setup.linear, controls, setup.newton, setup.forcing,
                     callback)
