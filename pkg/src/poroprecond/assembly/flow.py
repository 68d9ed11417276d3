"""Vectorized TPFA phase fluxes with single-point upstream weighting, and
Peaceman well sources, each with analytic derivatives.

Conventions: the potential of a face is
``Phi = T [(p_L + rho_f g z_L) - (p_K + rho_f g z_K)]`` so ``Phi > 0`` means
flow from L into K. The flux ``F = rho_up lam_up Phi`` therefore adds mass to
K and removes it from L.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constitutive import FluidModel, RelPermModel, density, relperm, viscosity


@dataclass
class PhaseProps:
    """Cell-wise phase properties and derivatives (arrays over cells)."""

    rho: np.ndarray
    drho: np.ndarray
    lam: np.ndarray
    dlam_ds: np.ndarray
    dlam_dp: np.ndarray

    def take(self, idx) -> "PhaseProps":
        return PhaseProps(self.rho[idx], self.drho[idx], self.lam[idx],
                          self.dlam_ds[idx], self.dlam_dp[idx])


def phase_properties(water: FluidModel, oil: FluidModel, rp: RelPermModel,
                     s, p) -> tuple[PhaseProps, PhaseProps]:
    """Density and mobility (lambda = k_r / mu) of both phases."""
    krw, krn, dkrw, dkrn = relperm(rp, s)
    out = []
    for fl, kr, dkr in ((water, krw, dkrw), (oil, krn, dkrn)):
        rho, drho = density(fl, p)
        mu, dmu = viscosity(fl, p)
        out.append(PhaseProps(rho, drho, kr / mu, dkr / mu, -kr * dmu / mu**2))
    return out[0], out[1]


@dataclass
class FluxResult:
    F: np.ndarray
    Phi: np.ndarray
    up_is_L: np.ndarray
    dF_dsK: np.ndarray
    dF_dsL: np.ndarray
    dF_dpK: np.ndarray
    dF_dpL: np.ndarray


def face_density(K: PhaseProps, L: PhaseProps):
    """Face density averaged over the cells where the phase is mobile.

    Returns ``(rho_f, drho_f/dp_K, drho_f/dp_L)``. A phase counts as present
    in a cell when its mobility is positive; with no presence on either side
    the face density is zero.
    """
    inK = K.lam > 0
    inL = L.lam > 0
    both = inK & inL
    rho_f = np.where(both, 0.5 * (K.rho + L.rho),
                     np.where(inK, K.rho, np.where(inL, L.rho, 0.0)))
    dK = np.where(both, 0.5 * K.drho, np.where(inK, K.drho, 0.0))
    dL = np.where(both, 0.5 * L.drho, np.where(inL & ~inK, L.drho, 0.0))
    return rho_f, dK, dL


def tpfa_flux(T, zK, zL, pK, pL, K: PhaseProps, L: PhaseProps, g: float) -> FluxResult:
    """Phase mass flux through faces between K and L (arrays over faces)."""
    rho_f, drfK, drfL = face_density(K, L)
    dz = zL - zK
    Phi = T * ((pL - pK) + rho_f * g * dz)
    dPhi_dpK = T * (-1.0 + drfK * g * dz)
    dPhi_dpL = T * (1.0 + drfL * g * dz)
    upL = Phi > 0
    rho_up = np.where(upL, L.rho, K.rho)
    lam_up = np.where(upL, L.lam, K.lam)
    F = rho_up * lam_up * Phi
    mob = rho_up * lam_up
    dF_dsK = np.where(upL, 0.0, K.rho * K.dlam_ds * Phi)
    dF_dsL = np.where(upL, L.rho * L.dlam_ds * Phi, 0.0)
    own_K = (K.drho * K.lam + K.rho * K.dlam_dp) * Phi
    own_L = (L.drho * L.lam + L.rho * L.dlam_dp) * Phi
    dF_dpK = np.where(upL, 0.0, own_K) + mob * dPhi_dpK
    dF_dpL = np.where(upL, own_L, 0.0) + mob * dPhi_dpL
    return FluxResult(F, Phi, upL, dF_dsK, dF_dsL, dF_dpK, dF_dpL)


@dataclass
class WellTerms:
    """Per-connection well sources ``q = q^I - q^P`` and their derivatives.

    Arrays have one entry per perforated cell connection; ``cell`` holds the
    cell ids (a cell may appear more than once).
    """

    cell: np.ndarray
    q_w: np.ndarray
    q_nw: np.ndarray
    dqw_ds: np.ndarray
    dqw_dp: np.ndarray
    dqnw_ds: np.ndarray
    dqnw_dp: np.ndarray
    Phi_w: np.ndarray
    Phi_nw: np.ndarray
    shut_in: int


def well_sources(cell, WI, p_bh, z_bh, z, is_injector, inject_both,
                 pK, w: PhaseProps, n: PhaseProps, g: float) -> WellTerms:
    """Evaluate the BHP-controlled well model on every connection.

    Args:
        cell: connection cell ids.
        WI: well indices per connection.
        p_bh: bottomhole pressure per connection (at its well's datum).
        z_bh: datum elevation per connection.
        z: cell centroid elevation per connection.
        is_injector: boolean per connection.
        inject_both: boolean per connection; False routes injection into the
            wetting phase only.
        pK: cell pressure per connection.
        w, n: phase properties restricted to the connection cells.
        g: gravity in internal units.

    A connection whose potential has the wrong sign for its role carries no
    flow for that phase (shut in) and bumps the ``shut_in`` counter.
    """
    lamT = w.lam + n.lam
    dlamT_ds = w.dlam_ds + n.dlam_ds
    dlamT_dp = w.dlam_dp + n.dlam_dp
    shut = 0
    res = {}
    for key, ph, allowed_inj in (("w", w, np.ones_like(is_injector)),
                                 ("nw", n, inject_both)):
        Phi = WI * ((p_bh - pK) + ph.rho * g * (z_bh - z))
        dPhi_dp = WI * (-1.0 + ph.drho * g * (z_bh - z))
        inj = is_injector & allowed_inj & (Phi > 0)
        prod = ~is_injector & (Phi < 0)
        # wrong-signed potentials: producer with Phi > 0, injector with Phi < 0
        shut += int(np.count_nonzero(~is_injector & (Phi > 0)))
        shut += int(np.count_nonzero(is_injector & allowed_inj & (Phi < 0)))
        # injector: q^I = rho lamT Phi; producer: q = -q^P = rho lam Phi
        mob = np.where(inj, lamT, np.where(prod, ph.lam, 0.0))
        dmob_ds = np.where(inj, dlamT_ds, np.where(prod, ph.dlam_ds, 0.0))
        dmob_dp = np.where(inj, dlamT_dp, np.where(prod, ph.dlam_dp, 0.0))
        q = ph.rho * mob * Phi
        dq_ds = ph.rho * dmob_ds * Phi
        dq_dp = (ph.drho * mob + ph.rho * dmob_dp) * Phi + ph.rho * mob * dPhi_dp
        res[key] = (q, dq_ds, dq_dp, Phi)
    return WellTerms(cell, res["w"][0], res["nw"][0], res["w"][1], res["w"][2],
                     res["nw"][1], res["nw"][2], res["w"][3], res["nw"][3], shut)
