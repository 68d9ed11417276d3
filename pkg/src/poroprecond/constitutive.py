"""Fluid, relative-permeability and rock models with analytic derivatives.

All functions broadcast over numpy arrays so they can be evaluated for every
cell or quadrature point at once. Model fields may themselves be arrays
(per-cell properties).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FluidModel:
    """Slightly compressible fluid, rho = rho_ref * (1 + c (p - p_ref)).

    Viscosity is constant; ``viscosity_derivative`` exists so a
    pressure-dependent law can be substituted without touching assembly.
    """

    rho_ref: float
    compressibility: float
    viscosity: float
    p_ref: float = 0.0

    def __post_init__(self):
        if not self.rho_ref > 0:
            raise ValueError("reference density must be positive")
        if self.compressibility < 0:
            raise ValueError("compressibility must be non-negative")
        if not self.viscosity > 0:
            raise ValueError("viscosity must be positive")


def density(fluid: FluidModel, p):
    """Return ``(rho, drho/dp)``; warns if rho becomes non-positive."""
    p = np.asarray(p, dtype=float)
    rho = fluid.rho_ref * (1.0 + fluid.compressibility * (p - fluid.p_ref))
    if np.any(rho <= 0):
        warnings.warn("non-positive fluid density encountered", RuntimeWarning,
                      stacklevel=2)
    drho = np.full_like(rho, fluid.rho_ref * fluid.compressibility)
    return rho, drho


def viscosity(fluid: FluidModel, p):
    """Return ``(mu, dmu/dp)``; constant model so the derivative is zero."""
    p = np.asarray(p, dtype=float)
    return np.full_like(p, fluid.viscosity), np.zeros_like(p)


@dataclass(frozen=True)
class RelPermModel:
    """Quadratic Corey curves on the normalized saturation."""

    s_wr: float = 0.0
    s_nwr: float = 0.0

    def __post_init__(self):
        if self.s_wr < 0 or self.s_nwr < 0 or self.s_wr + self.s_nwr >= 1:
            raise ValueError("residual saturations must be >= 0 and sum below 1")


def relperm(model: RelPermModel, s):
    """Return ``(k_rw, k_rnw, dk_rw/ds, dk_rnw/ds)``.

    The normalized saturation is clamped to [0, 1]; derivatives vanish where
    the clamp is active (strictly outside the mobile range).
    """
    s = np.asarray(s, dtype=float)
    span = 1.0 - model.s_wr - model.s_nwr
    sh_raw = (s - model.s_wr) / span
    sh = np.clip(sh_raw, 0.0, 1.0)
    inside = (sh_raw > 0.0) & (sh_raw < 1.0)
    krw = sh * sh
    krnw = (1.0 - sh) ** 2
    dkrw = np.where(inside, 2.0 * sh / span, 0.0)
    dkrnw = np.where(inside, -2.0 * (1.0 - sh) / span, 0.0)
    return krw, krnw, dkrw, dkrnw


@dataclass(frozen=True)
class RockModel:
    """Linear isotropic poroelastic rock.

    Attributes:
        E: Young's modulus.
        nu: Poisson ratio.
        biot: Biot coefficient b.
        phi0: reference porosity.
        rho_s: grain density (constant).
    """

    E: float
    nu: float
    biot: float = 1.0
    phi0: float = 0.2
    rho_s: float = 2650.0

    def __post_init__(self):
        nu = np.asarray(self.nu)
        if np.any(nu <= 0) or np.any(nu >= 0.5):
            raise ValueError("Poisson ratio must lie in (0, 0.5)")
        if np.any(np.asarray(self.E) <= 0):
            raise ValueError("Young's modulus must be positive")
        b = np.asarray(self.biot)
        if np.any(b < 0) or np.any(b > 1):
            raise ValueError("Biot coefficient must lie in [0, 1]")
        phi0 = np.asarray(self.phi0)
        if np.any(phi0 <= 0) or np.any(phi0 >= 1):
            raise ValueError("reference porosity must lie in (0, 1)")
        if np.any(b < phi0):
            # (b - phi0)(1 - b)/K_dr < 0: porosity falls as pressure rises
            log.warning("Biot coefficient below reference porosity gives a negative pore "
                        "compressibility")

    @property
    def K_dr(self):
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def shear_modulus(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lame_lambda(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def uniaxial_modulus(self):
        return self.K_dr + 4.0 * self.shear_modulus / 3.0

    def C_dr(self) -> np.ndarray:
        """6x6 Voigt elasticity matrix (engineering shear strains)."""
        lam, mu = float(self.lame_lambda), float(self.shear_modulus)
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] += 2.0 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return C


def porosity_p_coefficient(rock: RockModel):
    """dphi/dp = (b - phi0)(1 - b) / K_dr."""
    return (rock.biot - rock.phi0) * (1.0 - rock.biot) / rock.K_dr


def porosity(rock: RockModel, eps_v, p, eps_v0=0.0, p0=0.0, warn: bool = True):
    """Return ``(phi, dphi/deps_v, dphi/dp)`` of the linear porosity law."""
    eps_v = np.asarray(eps_v, dtype=float)
    p = np.asarray(p, dtype=float)
    cp = porosity_p_coefficient(rock)
    phi = rock.phi0 + rock.biot * (eps_v - eps_v0) + cp * (p - p0)
    if warn and np.any((phi <= 0) | (phi >= 1)):
        warnings.warn("porosity left (0, 1)", RuntimeWarning, stacklevel=2)
    shape = np.broadcast(phi, eps_v, p).shape
    return phi, np.broadcast_to(rock.biot, shape) + 0.0, np.broadcast_to(cp, shape) + 0.0


def mixture_density(rock: RockModel, water: FluidModel, oil: FluidModel, phi, s, p):
    """Bulk density of grains plus pore fluids and its partial derivatives.

    Returns:
        ``(rho, drho/deps_v, drho/ds, drho/dp)``. Grain density is constant.
    """
    phi = np.asarray(phi, dtype=float)
    s = np.asarray(s, dtype=float)
    rw, drw = density(water, p)
    rn, drn = density(oil, p)
    fluid = s * rw + (1.0 - s) * rn
    rho = (1.0 - phi) * rock.rho_s + phi * fluid
    contrast = -rock.rho_s + fluid
    d_eps = contrast * rock.biot
    d_s = phi * (rw - rn)
    d_p = contrast * porosity_p_coefficient(rock) + phi * (s * drw + (1.0 - s) * drn)
    return rho, d_eps, d_s, d_p
