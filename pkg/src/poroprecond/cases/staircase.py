"""Staircase benchmark generator.

A high-permeability channel climbs through a low-permeability host in a
square spiral. For a base resolution ``n`` (cells per axis) the layout in
cell-index space is

* thickness ``t = max(1, n // 5)``, inset ``a = n // 5``,
  bottom margin ``zm = max(0, (n - 4 t) // 2)``,
  ``nseg = min(4, (n - 2 zm) // t)`` segments (at least 3 fit when n >= 3);
* segment ``k`` occupies the z band ``[zm + k t, zm + (k + 1) t)`` and runs

  0. along +x: ``x in [a, n - a)``, ``y in [a, a + t)``
  1. along +y: ``x in [n - a - t, n - a)``, ``y in [a, n - a)``
  2. along -x: ``x in [a, n - a)``, ``y in [n - a - t, n - a)``
  3. along -y: ``x in [a, a + t)``, ``y in [a + t, n - a)``

  so consecutive segments overlap in plan view where they turn and touch
  vertically;
* the injector is the column ``(a, a)`` through band 0, the producer the
  column at the far end of the last segment through the last band:
  ``(a, a + t)`` with four segments, ``(a, n - a - 1)`` with three.

Refinement by ``levels`` splits every cell into ``2^levels`` per axis; the
region of a fine cell is that of its parent and the wells follow the
refined columns. Layout version: 1.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import (CaseConfig, FieldsSpec, FluidSpec, GridSpec, InitialSpec, RegionSpec,
                     RelPermSpec, WellConfig, write_case)
from .raster import write_int_raster

LAYOUT_VERSION = 1
SEAL, CHANNEL = 0, 1


def staircase_layout(n: int):
    """Coarse layout: region ids (natural order) and well columns.

    Returns:
        ``(regions, injector, producer)``; each well is ``(i, j, k0, k1)``.

    Raises:
        ValueError: if ``n < 3``.
    """
    if n < 3:
        raise ValueError(f"staircase needs at least 3 cells per axis, got {n}")
    t = max(1, n // 5)
    a = n // 5
    zm = max(0, (n - 4 * t) // 2)
    nseg = min(4, (n - 2 * zm) // t)
    reg = np.zeros((n, n, n), dtype=np.int64)  # (k, j, i)
    boxes = [((a, n - a), (a, a + t)),
             ((n - a - t, n - a), (a, n - a)),
             ((a, n - a), (n - a - t, n - a)),
             ((a, a + t), (a + t, n - a))]
    for k in range(nseg):
        (x0, x1), (y0, y1) = boxes[k]
        z0 = zm + k * t
        reg[z0:z0 + t, y0:y1, x0:x1] = CHANNEL
    inj = (a, a, zm, zm + t - 1)
    last = zm + (nseg - 1) * t
    prod_xy = (a, a + t) if nseg == 4 else (a, n - a - 1)
    prod = (*prod_xy, last, last + t - 1)
    return reg.ravel(), inj, prod


def refine_regions(regions: np.ndarray, n: int, levels: int) -> np.ndarray:
    """Nested refinement of a natural-order region map of an n^3 box."""
    r = 2 ** levels
    cube = regions.reshape(n, n, n)
    return np.kron(cube, np.ones((r, r, r), dtype=cube.dtype)).ravel()


def _refine_well(w, r):
    i, j, k0, k1 = w
    return i * r, j * r, k0 * r, (k1 + 1) * r - 1


def table1_materials():
    """Channel/seal rock and the two fluids of the staircase benchmark."""
    seal = RegionSpec("seal", SEAL, (1.0, 1.0, 1.0), 0.05, 5000.0, 0.25, 1.0, 2650.0)
    chan = RegionSpec("channel", CHANNEL, (1000.0, 1000.0, 1000.0), 0.20, 5000.0, 0.25,
                      1.0, 2650.0)
    water = FluidSpec(1035.0, 4.34e-4, 0.3)
    oil = FluidSpec(863.0, 1.98e-4, 3.0)
    return [seal, chan], water, oil


def generate_staircase(levels: int = 0, base_resolution: int = 10,
                       extent=(400.0, 400.0, 200.0), datum_pressure: float = 20.0,
                       ) -> tuple[CaseConfig, np.ndarray]:
    """Build the staircase case at refinement ``levels``.

    The returned config references the region raster ``staircase_regions.txt``;
    :func:`write_staircase` writes both files.

    Returns:
        ``(config, regions)`` with regions in natural order on the fine grid.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    n0 = int(base_resolution)
    reg0, inj, prod = staircase_layout(n0)
    r = 2 ** levels
    n = n0 * r
    regions = refine_regions(reg0, n0, levels)
    materials, water, oil = table1_materials()
    wells = []
    for name, role, col, dbhp in (("inj", "injector", inj, 5.0), ("prod", "producer", prod, -5.0)):
        i, j, k0, k1 = _refine_well(col, r)
        wells.append(WellConfig(name, i, j, role, dbhp, k0=k0, k1=k1))
    case = CaseConfig(
        grid=GridSpec(n, n, n, tuple(float(e) for e in extent)),
        regions=materials, wetting=water, nonwetting=oil,
        initial=InitialSpec(datum_pressure, datum_elevation=float(extent[2])),
        name=f"staircase_L{levels}", fields=FieldsSpec(regions="staircase_regions.txt"),
        relperm=RelPermSpec(0.2, 0.2), wells=wells)
    case.region_override = regions
    return case, regions


def write_staircase(out_dir, levels: int = 0, base_resolution: int = 10, **kw) -> Path:
    """Write ``staircase_L<levels>.case`` and its region raster into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    case, regions = generate_staircase(levels, base_resolution, **kw)
    write_int_raster(out / case.fields.regions, regions)
    path = out / f"{case.name}.case"
    write_case(case, path)
    return path
