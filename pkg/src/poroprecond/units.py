"""Unit conversion into the simulator's internal consistent system.

Lengths are always meters. The pressure, mass, and time units are selectable
so that global unit-rescale invariance can be exercised; the default internal
system is (MPa, kg, day).
"""
from __future__ import annotations

from dataclasses import dataclass

MILLIDARCY_M2 = 9.869233e-16
GRAVITY_SI = 9.81

# Conversion of user-facing units to SI base values, grouped by dimension.
_UNIT_TABLE: dict[str, tuple[str, float]] = {
    "pa": ("pressure", 1.0),
    "kpa": ("pressure", 1.0e3),
    "mpa": ("pressure", 1.0e6),
    "gpa": ("pressure", 1.0e9),
    "bar": ("pressure", 1.0e5),
    "psi": ("pressure", 6894.757293168),
    "md": ("permeability", MILLIDARCY_M2),
    "d": ("permeability", MILLIDARCY_M2 * 1.0e3),
    "m2": ("permeability", 1.0),
    "cp": ("viscosity", 1.0e-3),
    "pa.s": ("viscosity", 1.0),
    "s": ("time", 1.0),
    "hour": ("time", 3600.0),
    "day": ("time", 86400.0),
    "kg/m3": ("density", 1.0),
    "g/cm3": ("density", 1.0e3),
    "1/pa": ("compressibility", 1.0),
    "1/mpa": ("compressibility", 1.0e-6),
    "1/bar": ("compressibility", 1.0e-5),
    "1/psi": ("compressibility", 1.0 / 6894.757293168),
    "m": ("length", 1.0),
    "ft": ("length", 0.3048),
    "-": ("dimensionless", 1.0),
}

# Canonical display unit per dimension; case files are stored in these.
CANONICAL: dict[str, str] = {
    "pressure": "MPa",
    "permeability": "mD",
    "viscosity": "cP",
    "time": "day",
    "density": "kg/m3",
    "compressibility": "1/MPa",
    "length": "m",
    "dimensionless": "-",
}


class UnitError(ValueError):
    """Raised for unknown units or a unit of the wrong dimension."""


def unit_dimension(unit: str) -> str:
    try:
        return _UNIT_TABLE[unit.strip().lower()][0]
    except KeyError:
        raise UnitError(f"unknown unit '{unit}'") from None


def to_canonical(value: float, unit: str, dimension: str) -> float:
    """Convert ``value`` in ``unit`` to the canonical unit of ``dimension``.

    Raises:
        UnitError: if the unit is unknown or belongs to another dimension.
    """
    dim, factor = _UNIT_TABLE.get(unit.strip().lower(), (None, None))
    if dim is None:
        raise UnitError(f"unknown unit '{unit}'")
    if dim != dimension:
        raise UnitError(f"unit '{unit}' is a {dim} unit, expected {dimension}")
    canon = _UNIT_TABLE[CANONICAL[dimension].lower()][1]
    if factor == canon:
        return value
    return value * factor / canon


@dataclass(frozen=True)
class UnitSystem:
    """Internal unit system: meters plus configurable pressure, mass, time.

    Attributes:
        pressure: size of the internal pressure unit in Pa.
        mass: size of the internal mass unit in kg.
        time: size of the internal time unit in s.
    """

    pressure: float = 1.0e6
    mass: float = 1.0
    time: float = 86400.0

    @property
    def gravity(self) -> float:
        """g such that rho*g*z yields internal pressure for rho in internal density."""
        return GRAVITY_SI * self.mass / self.pressure

    def pressure_from_mpa(self, v):
        return v * 1.0e6 / self.pressure

    def modulus_from_mpa(self, v):
        return v * 1.0e6 / self.pressure

    def compressibility_from_per_mpa(self, v):
        return v * self.pressure / 1.0e6

    def viscosity_from_cp(self, v):
        return v * 1.0e-3 / (self.pressure * self.time)

    def density_from_kgm3(self, v):
        return v / self.mass

    def time_from_day(self, v):
        return v * 86400.0 / self.time

    def perm_from_md(self, v):
        return v * MILLIDARCY_M2


DEFAULT_UNITS = UnitSystem()
