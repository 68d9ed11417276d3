"""Plain-text case files.

A case file is a list of ``[section]`` headers followed by ``key = value``
lines. ``#`` starts a comment. Numeric values may carry a trailing unit
(``perm = 1000 mD``, ``extent = 400 400 200 m``); values without a unit are
read in the canonical unit of their dimension (MPa, mD, cP, day, kg/m3,
1/MPa, m). Repeated sections use a name suffix: ``[region.channel]``,
``[well.inj]``.

Sections and keys (defaults in parentheses; ``*`` marks required):

``[case]``
    name (``case``)
``[units]``
    pressure (``MPa``), time (``day``): internal unit system used by the solver.
``[grid]`` *
    nx*, ny*, nz*, extent* (3 lengths), origin (``0 0 0``)
``[fields]``
    regions: raster of integer region ids (all cells take the lowest id
    when absent); perm, porosity: rasters overriding the region values;
    threshold (0): floor applied to the porosity raster; source_shape and
    crop_offset (3 ints each): crop the rasters from a larger box.
``[region.NAME]`` * (at least one)
    id (0), perm* (1 or 3 values), porosity*, youngs_modulus*, poisson*,
    biot (1), grain_density (2650 kg/m3)
``[fluid.wetting]`` *, ``[fluid.nonwetting]`` *
    density*, compressibility*, viscosity*, reference_pressure (datum pressure)
``[relperm]``
    s_wr (0.2), s_nwr (0.2)
``[initial]`` *
    datum_pressure*, datum_elevation (top layer centroid), saturation
    (s_wr), equilibrium_phase (``auto``), geostatic (``true``), gravity (``true``)
``[mechanics]``
    xmin .. zmax: ``roller``/``free``/``fixed`` (rollers except a free top);
    traction_<side>: 3 pressures.
``[well.NAME]``
    i*, j*, k0 (0), k1 (nz - 1), role*, delta_bhp*, ramp (1 day),
    radius (0.1524 m), skin (0), inject_phase (``wetting``), reference_elevation
``[time]``
    dt_initial (0.1), dt_max (1), growth (2), end (100), cut (0.5), max_cuts (10)
``[newton]``
    tol (1e-5), max_iter (15), max_backtracks (5), sufficient_decrease (1e-4)
``[forcing]``
    enabled (false), gamma (0.9), omega (2), eta0 (0.1)
``[linear]``
    method (``gmres``), tol (1e-6), restart (200), max_iter (500), compare_richardson (false),
    richardson_max_iter (5000)
``[precond]``
    cpr_mode (``quasi``), second_stage (``bgs``), bgs_sweeps (3),
    amg_strength (0.25), amg_max_coarse (64), mech_amg (``aggregation``),
    fs_modulus_scale (1), rsl_tol (1e-8)
``[output]``
    vtk (true), stride (1)
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..grid import SIDES
from ..units import CANONICAL, UnitError, _UNIT_TABLE, to_canonical


class CaseParseError(ValueError):
    """Invalid case file; ``line`` is the 1-based offending line (0 if none)."""

    def __init__(self, message: str, line: int = 0, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<case>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)


@dataclass
class GridSpec:
    nx: int
    ny: int
    nz: int
    extent: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)


@dataclass
class FieldsSpec:
    regions: str | None = None
    perm: str | None = None
    porosity: str | None = None
    threshold: float = 0.0
    source_shape: tuple | None = None
    crop_offset: tuple = (0, 0, 0)


@dataclass
class RegionSpec:
    """Material of one region (canonical units: mD, MPa, kg/m3)."""

    name: str
    id: int
    perm: tuple
    porosity: float
    youngs_modulus: float
    poisson: float
    biot: float = 1.0
    grain_density: float = 2650.0


@dataclass
class FluidSpec:
    density: float
    compressibility: float
    viscosity: float
    reference_pressure: float | None = None


@dataclass
class RelPermSpec:
    s_wr: float = 0.2
    s_nwr: float = 0.2


@dataclass
class InitialSpec:
    datum_pressure: float
    datum_elevation: float | None = None
    saturation: float | None = None
    equilibrium_phase: str = "auto"
    geostatic: bool = True
    gravity: bool = True


@dataclass
class MechanicsSpec:
    bc: dict = field(default_factory=lambda: {
        "xmin": "roller", "xmax": "roller", "ymin": "roller",
        "ymax": "roller", "zmin": "roller", "zmax": "free"})
    tractions: dict = field(default_factory=dict)


@dataclass
class WellConfig:
    name: str
    i: int
    j: int
    role: str
    delta_bhp: float
    k0: int = 0
    k1: int | None = None
    ramp: float = 1.0
    radius: float = 0.1524
    skin: float = 0.0
    inject_phase: str = "wetting"
    reference_elevation: float | None = None


@dataclass
class TimeSpec:
    dt_initial: float = 0.1
    dt_max: float = 1.0
    growth: float = 2.0
    end: float = 100.0
    cut: float = 0.5
    max_cuts: int = 10


@dataclass
class NewtonSpec:
    tol: float = 1e-5
    max_iter: int = 15
    max_backtracks: int = 5
    sufficient_decrease: float = 1e-4


@dataclass
class ForcingSpec:
    enabled: bool = False
    gamma: float = 0.9
    omega: float = 2.0
    eta0: float = 0.1


@dataclass
class LinearSpec:
    method: str = "gmres"
    tol: float = 1e-6
    restart: int = 200
    max_iter: int = 500
    compare_richardson: bool = False
    richardson_max_iter: int = 5000


@dataclass
class PrecondSpec:
    cpr_mode: str = "quasi"
    second_stage: str = "bgs"
    bgs_sweeps: int = 3
    amg_strength: float = 0.25
    amg_max_coarse: int = 64
    mech_amg: str = "aggregation"
    fs_modulus_scale: float = 1.0
    rsl_tol: float = 1e-8


@dataclass
class OutputSpec:
    vtk: bool = True
    stride: int = 1


@dataclass
class UnitsSpec:
    pressure: str = "MPa"
    time: str = "day"


@dataclass
class CaseConfig:
    """Everything needed to build and run one simulation.

    Values are held in canonical units; :func:`build_case` converts them to
    the internal system selected by ``units``. Relative raster paths are
    resolved against ``base_dir``.
    """

    grid: GridSpec
    regions: list
    wetting: FluidSpec
    nonwetting: FluidSpec
    initial: InitialSpec
    name: str = "case"
    units: UnitsSpec = field(default_factory=UnitsSpec)
    fields: FieldsSpec = field(default_factory=FieldsSpec)
    relperm: RelPermSpec = field(default_factory=RelPermSpec)
    mechanics: MechanicsSpec = field(default_factory=MechanicsSpec)
    wells: list = field(default_factory=list)
    time: TimeSpec = field(default_factory=TimeSpec)
    newton: NewtonSpec = field(default_factory=NewtonSpec)
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    linear: LinearSpec = field(default_factory=LinearSpec)
    precond: PrecondSpec = field(default_factory=PrecondSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    base_dir: str = field(default=".", compare=False)
    # in-memory region ids that take precedence over ``fields.regions``
    region_override: object = field(default=None, compare=False, repr=False)
    perm_override: object = field(default=None, compare=False, repr=False)
    porosity_override: object = field(default=None, compare=False, repr=False)

    def resolve(self, path: str | None) -> str | None:
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


# -- schema -------------------------------------------------------------------
# key -> (kind, dimension, count). kind: int, float, bool, str, choice tuple.
_P, _L, _T = "pressure", "length", "time"
_SCHEMA: dict[str, dict[str, tuple]] = {
    "case": {"name": ("str", None, 1)},
    "units": {"pressure": (("MPa", "kPa", "Pa", "GPa", "bar"), None, 1),
              "time": (("day", "hour", "s"), None, 1)},
    "grid": {"nx": ("int", None, 1), "ny": ("int", None, 1), "nz": ("int", None, 1),
             "extent": ("float", _L, 3), "origin": ("float", _L, 3)},
    "fields": {"regions": ("str", None, 1), "perm": ("str", None, 1),
               "porosity": ("str", None, 1), "threshold": ("float", "dimensionless", 1),
               "source_shape": ("int", None, 3), "crop_offset": ("int", None, 3)},
    "region": {"id": ("int", None, 1), "perm": ("float", "permeability", (1, 3)),
               "porosity": ("float", "dimensionless", 1),
               "youngs_modulus": ("float", _P, 1), "poisson": ("float", "dimensionless", 1),
               "biot": ("float", "dimensionless", 1), "grain_density": ("float", "density", 1)},
    "fluid": {"density": ("float", "density", 1),
              "compressibility": ("float", "compressibility", 1),
              "viscosity": ("float", "viscosity", 1), "reference_pressure": ("float", _P, 1)},
    "relperm": {"s_wr": ("float", "dimensionless", 1), "s_nwr": ("float", "dimensionless", 1)},
    "initial": {"datum_pressure": ("float", _P, 1), "datum_elevation": ("float", _L, 1),
                "saturation": ("float", "dimensionless", 1),
                "equilibrium_phase": (("auto", "wetting", "nonwetting"), None, 1),
                "geostatic": ("bool", None, 1), "gravity": ("bool", None, 1)},
    "mechanics": {**{s: (("roller", "free", "fixed"), None, 1) for s in SIDES},
                  **{f"traction_{s}": ("float", _P, 3) for s in SIDES}},
    "well": {"i": ("int", None, 1), "j": ("int", None, 1), "k0": ("int", None, 1),
             "k1": ("int", None, 1), "role": (("injector", "producer"), None, 1),
             "delta_bhp": ("float", _P, 1), "ramp": ("float", _T, 1),
             "radius": ("float", _L, 1), "skin": ("float", "dimensionless", 1),
             "inject_phase": (("wetting", "both"), None, 1),
             "reference_elevation": ("float", _L, 1)},
    "time": {"dt_initial": ("float", _T, 1), "dt_max": ("float", _T, 1),
             "growth": ("float", "dimensionless", 1), "end": ("float", _T, 1),
             "cut": ("float", "dimensionless", 1), "max_cuts": ("int", None, 1)},
    "newton": {"tol": ("float", "dimensionless", 1), "max_iter": ("int", None, 1),
               "max_backtracks": ("int", None, 1),
               "sufficient_decrease": ("float", "dimensionless", 1)},
    "forcing": {"enabled": ("bool", None, 1), "gamma": ("float", "dimensionless", 1),
                "omega": ("float", "dimensionless", 1), "eta0": ("float", "dimensionless", 1)},
    "linear": {"method": (("gmres", "richardson", "direct", "exact"), None, 1),
               "tol": ("float", "dimensionless", 1), "restart": ("int", None, 1),
               "max_iter": ("int", None, 1), "compare_richardson": ("bool", None, 1),
               "richardson_max_iter": ("int", None, 1)},
    "precond": {"cpr_mode": (("quasi", "true", "rsl"), None, 1),
                "second_stage": (("bgs", "ilu0"), None, 1), "bgs_sweeps": ("int", None, 1),
                "amg_strength": ("float", "dimensionless", 1),
                "amg_max_coarse": ("int", None, 1),
                "mech_amg": (("aggregation", "classical"), None, 1),
                "fs_modulus_scale": ("float", "dimensionless", 1),
                "rsl_tol": ("float", "dimensionless", 1)},
    "output": {"vtk": ("bool", None, 1), "stride": ("int", None, 1)},
}
_NAMED = ("region", "fluid", "well")
_REQUIRED = ("grid", "region", "fluid.wetting", "fluid.nonwetting", "initial")
_REQUIRED_KEYS = {
    "grid": ("nx", "ny", "nz", "extent"),
    "region": ("perm", "porosity", "youngs_modulus", "poisson"),
    "fluid": ("density", "compressibility", "viscosity"),
    "initial": ("datum_pressure",),
    "well": ("i", "j", "role", "delta_bhp"),
}


def _convert(section, key, raw, line, path):
    kind, dim, count = _SCHEMA[section][key]
    toks = raw.split()
    if not toks:
        raise CaseParseError(f"[{section}] {key}: empty value", line, path)
    if kind == "str":
        return raw.strip()
    if isinstance(kind, tuple):
        if len(toks) != 1 or toks[0] not in kind:
            raise CaseParseError(
                f"[{section}] {key}: expected one of {', '.join(kind)}, got '{raw.strip()}'",
                line, path)
        return toks[0]
    if kind == "bool":
        v = toks[0].lower()
        if len(toks) != 1 or v not in ("true", "false", "yes", "no", "1", "0"):
            raise CaseParseError(f"[{section}] {key}: expected true/false", line, path)
        return v in ("true", "yes", "1")
    unit = None
    if len(toks) > 1 and toks[-1].lower() in _UNIT_TABLE:
        unit = toks.pop()
    counts = count if isinstance(count, tuple) else (count,)
    if len(toks) not in counts:
        raise CaseParseError(f"[{section}] {key}: expected {' or '.join(map(str, counts))} "
                             f"value(s), got {len(toks)}", line, path)
    try:
        vals = [int(t) if kind == "int" else float(t) for t in toks]
    except ValueError:
        raise CaseParseError(f"[{section}] {key}: cannot read '{raw.strip()}' as {kind}",
                             line, path) from None
    if unit is not None:
        if dim is None:
            raise CaseParseError(f"[{section}] {key}: takes no unit, got '{unit}'", line, path)
        try:
            vals = [to_canonical(v, unit, dim) for v in vals]
        except UnitError as e:
            raise CaseParseError(f"[{section}] {key}: {e}", line, path) from None
    return vals[0] if count == 1 else tuple(vals)


def _tokenize(text: str, path):
    """Return ``{section: ({key: value}, header_line, {key: line})}``."""
    sections: dict[str, tuple[dict, int, dict]] = {}
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                raise CaseParseError(f"malformed section header '{s}'", n, path)
            name = s[1:-1].strip()
            base = name.split(".", 1)[0]
            if base not in _SCHEMA:
                raise CaseParseError(f"unknown section [{name}]", n, path)
            if base in _NAMED and "." not in name:
                raise CaseParseError(f"section [{base}] needs a name, e.g. [{base}.x]", n, path)
            if base not in _NAMED and "." in name:
                raise CaseParseError(f"section [{base}] takes no name", n, path)
            if base == "fluid" and name not in ("fluid.wetting", "fluid.nonwetting"):
                raise CaseParseError("fluid sections are [fluid.wetting] and [fluid.nonwetting]",
                                     n, path)
            if name in sections:
                raise CaseParseError(f"duplicate section [{name}]", n, path)
            sections[name] = ({}, n, {})
            current = name
            continue
        if current is None:
            raise CaseParseError("key outside of any section", n, path)
        if "=" not in s:
            raise CaseParseError(f"expected 'key = value', got '{s}'", n, path)
        key, raw = (t.strip() for t in s.split("=", 1))
        base = current.split(".", 1)[0]
        if key not in _SCHEMA[base]:
            raise CaseParseError(f"unknown key '{key}' in [{current}]", n, path)
        vals, _, lines = sections[current]
        if key in vals:
            raise CaseParseError(f"duplicate key '{key}' in [{current}]", n, path)
        vals[key] = _convert(base, key, raw, n, path)
        lines[key] = n
    return sections


def parse_case_text(text: str, path: str | None = None, base_dir: str = ".") -> CaseConfig:
    """Parse case-file text into a validated :class:`CaseConfig`.

    Raises:
        CaseParseError: with the offending line number where one applies.
    """
    secs = _tokenize(text, path)
    present = {name.split(".", 1)[0] for name in secs} | set(secs)
    missing = [r for r in _REQUIRED if r not in present]
    if missing:
        raise CaseParseError("missing required section(s): "
                             + ", ".join(f"[{m}{'.NAME' if m in _NAMED else ''}]"
                                         for m in missing), 0, path)
    for name, (vals, hline, _) in secs.items():
        base = name.split(".", 1)[0]
        for k in _REQUIRED_KEYS.get(base, ()):
            if k not in vals:
                raise CaseParseError(f"[{name}] is missing required key '{k}'", hline, path)

    def get(section, cls, **extra):
        vals, hline, _ = secs.get(section, ({}, 0, {}))
        try:
            return cls(**{**extra, **vals})
        except (TypeError, ValueError) as e:
            raise CaseParseError(f"[{section}]: {e}", hline, path) from None

    grid = get("grid", GridSpec)
    regions = []
    for name, (vals, hline, _) in secs.items():
        if name.startswith("region."):
            v = dict(vals)
            v.setdefault("id", 0)
            perm = v.pop("perm")
            perm = (perm,) * 3 if not isinstance(perm, tuple) else perm
            perm = perm * 3 if len(perm) == 1 else perm
            regions.append(RegionSpec(name=name.split(".", 1)[1], perm=perm, **v))
    regions.sort(key=lambda r: r.id)
    ids = [r.id for r in regions]
    if len(set(ids)) != len(ids):
        raise CaseParseError(f"region ids must be unique, got {ids}", 0, path)
    mech_vals, mech_line, _ = secs.get("mechanics", ({}, 0, {}))
    mech = MechanicsSpec()
    for k, v in mech_vals.items():
        if k.startswith("traction_"):
            mech.tractions[k[len("traction_"):]] = v
        else:
            mech.bc[k] = v
    wells = [get(name, WellConfig, name=name.split(".", 1)[1])
             for name in secs if name.startswith("well.")]
    fields_spec = get("fields", FieldsSpec)
    case = CaseConfig(
        grid=grid, regions=regions,
        wetting=get("fluid.wetting", FluidSpec), nonwetting=get("fluid.nonwetting", FluidSpec),
        initial=get("initial", InitialSpec), name=secs.get("case", ({},))[0].get("name", "case"),
        units=get("units", UnitsSpec), fields=fields_spec, relperm=get("relperm", RelPermSpec),
        mechanics=mech, wells=wells, time=get("time", TimeSpec), newton=get("newton", NewtonSpec),
        forcing=get("forcing", ForcingSpec), linear=get("linear", LinearSpec),
        precond=get("precond", PrecondSpec), output=get("output", OutputSpec),
        base_dir=base_dir)
    try:
        validate_case(case)
    except ValueError as e:
        raise CaseParseError(str(e), 0, path) from None
    return case


def validate_case(case: CaseConfig) -> None:
    """Cross-field checks that do not depend on external files."""
    g = case.grid
    if min(g.nx, g.ny, g.nz) < 1:
        raise ValueError("grid counts must be >= 1")
    if any(not e > 0 for e in g.extent):
        raise ValueError("grid extents must be positive")
    for r in case.regions:
        if not 0 < r.poisson < 0.5:
            raise ValueError(f"region {r.name}: poisson ratio must lie in (0, 0.5)")
        if not 0 < r.porosity < 1:
            raise ValueError(f"region {r.name}: porosity must lie in (0, 1)")
        if r.youngs_modulus <= 0 or min(r.perm) <= 0:
            raise ValueError(f"region {r.name}: modulus and permeability must be positive")
    if case.relperm.s_wr + case.relperm.s_nwr >= 1:
        raise ValueError("s_wr + s_nwr must be < 1")
    for w in case.wells:
        k1 = g.nz - 1 if w.k1 is None else w.k1
        if not (0 <= w.i < g.nx and 0 <= w.j < g.ny and 0 <= w.k0 <= k1 < g.nz):
            raise ValueError(f"well {w.name}: perforation outside the grid")
    if case.fields.regions is None and len(case.regions) > 1:
        raise ValueError("several regions defined but no [fields] regions raster")
    t = case.time
    if not 0 < t.dt_initial <= t.dt_max:
        raise ValueError("need 0 < dt_initial <= dt_max")
    if t.growth <= 1:
        raise ValueError("time growth must exceed 1")
    if not case.newton.tol > 0:
        raise ValueError("newton tol must be positive")
    if case.output.stride < 1:
        raise ValueError("output stride must be >= 1")


def parse_case(path) -> CaseConfig:
    """Read and validate a case file.

    Raises:
        CaseParseError: for unreadable files and all format errors.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise CaseParseError(f"cannot read case file: {e.strerror}", 0, str(path)) from None
    return parse_case_text(text, str(path), str(p.parent))


# -- serialization --------------------------------------------------------------
def _fmt(value, dim):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        body = " ".join(_fmt(v, None) for v in value)
    elif isinstance(value, float):
        body = repr(value)
    else:
        body = str(value)
    if dim and dim != "dimensionless" and not isinstance(value, str):
        body += " " + CANONICAL[dim]
    return body


def _emit(lines, section, base, obj, skip=()):
    lines.append(f"[{section}]")
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if v is None:
            continue
        dim = _SCHEMA[base][f.name][1]
        lines.append(f"{f.name} = {_fmt(v, dim)}")
    lines.append("")


def serialize_case(case: CaseConfig) -> str:
    """Render a config as case-file text in canonical units."""
    lines = [f"# case file written by poroprecond", ""]
    lines += ["[case]", f"name = {case.name}", ""]
    _emit(lines, "units", "units", case.units)
    _emit(lines, "grid", "grid", case.grid)
    if any(getattr(case.fields, f.name) != f.default for f in dataclasses.fields(FieldsSpec)):
        _emit(lines, "fields", "fields", case.fields)
    for r in case.regions:
        _emit(lines, f"region.{r.name}", "region", r, skip=("name",))
    _emit(lines, "fluid.wetting", "fluid", case.wetting)
    _emit(lines, "fluid.nonwetting", "fluid", case.nonwetting)
    _emit(lines, "relperm", "relperm", case.relperm)
    _emit(lines, "initial", "initial", case.initial)
    lines.append("[mechanics]")
    for s in SIDES:
        lines.append(f"{s} = {case.mechanics.bc[s]}")
    for s, v in case.mechanics.tractions.items():
        lines.append(f"traction_{s} = {_fmt(tuple(float(x) for x in v), _P)}")
    lines.append("")
    for w in case.wells:
        _emit(lines, f"well.{w.name}", "well", w, skip=("name",))
    for sec in ("time", "newton", "forcing", "linear", "precond", "output"):
        _emit(lines, sec, sec, getattr(case, sec))
    return "\n".join(lines)


def write_case(case: CaseConfig, path) -> None:
    Path(path).write_text(serialize_case(case))
