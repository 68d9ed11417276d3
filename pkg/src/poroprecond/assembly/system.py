"""Residual and 3x3 block Jacobian of the coupled displacement-saturation-
pressure system, plus block-row scaling.

Residual conventions (backward Euler, per cell K of volume V):

* momentum: ``K u - sum_e b p_e Bvol_e + g sum_q W rho_q e_z - f_traction``
* wetting mass: ``V (m_w - m_w_prev) + dt * (outflow fluxes) - dt * q_w``

where fluxes enter with ``-dt F`` in the K equation and ``+dt F`` in the L
equation of each face, and ``q = q^I - q^P`` is the well source.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..constitutive import (FluidModel, RelPermModel, RockModel, porosity,
                            porosity_p_coefficient)
from ..grid import StructuredGrid, WellSpec, well_index
from ..linalg import SparsePattern
from .fem import DofMap, apply_bcs, elastic_stiffness, q1_kernels
from .flow import WellTerms, phase_properties, tpfa_flux, well_sources

BLOCKS = ("u", "s", "p")


@dataclass
class SystemState:
    """Unknowns at one time level.

    Attributes:
        u: free displacement DoFs [m].
        s: wetting saturation per cell.
        p: pressure per cell [internal pressure].
        t: time at this level.
        dt: step that produced this level.
    """

    u: np.ndarray
    s: np.ndarray
    p: np.ndarray
    t: float = 0.0
    dt: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.u.copy(), self.s.copy(), self.p.copy(), self.t, self.dt)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.s, self.p])

    def with_vector(self, x: np.ndarray) -> "SystemState":
        nu, nc = self.u.size, self.s.size
        return SystemState(x[:nu].copy(), x[nu:nu + nc].copy(), x[nu + nc:].copy(),
                           self.t, self.dt)


@dataclass
class Reference:
    """Reference state for porosity and well datums (set at initialization)."""

    eps_q: np.ndarray
    eps_c: np.ndarray
    p: np.ndarray
    well_datum_p: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class BlockResidual:
    r_u: np.ndarray
    r_s: np.ndarray
    r_p: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.r_u, self.r_s, self.r_p])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))


@dataclass
class BlockJacobian:
    """Nine sparse blocks keyed ``"uu"``, ``"us"``, ..., ``"pp"``.

    ``scale`` holds the block-row factors ``(c_u, c_s, c_p)`` the blocks have
    been divided by (all ones when unscaled).
    """

    blocks: dict
    n_u: int
    n_c: int
    scale: tuple = (1.0, 1.0, 1.0)

    def __getitem__(self, key) -> sp.csr_matrix:
        return self.blocks[key]

    @property
    def shape(self):
        n = self.n_u + 2 * self.n_c
        return (n, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        nu, nc = self.n_u, self.n_c
        xs = {"u": x[:nu], "s": x[nu:nu + nc], "p": x[nu + nc:]}
        out = []
        for r in BLOCKS:
            y = self.blocks[r + "u"] @ xs["u"]
            y = y + self.blocks[r + "s"] @ xs["s"]
            y = y + self.blocks[r + "p"] @ xs["p"]
            out.append(y)
        return np.concatenate(out)

    __matmul__ = matvec

    def flow(self) -> sp.csr_matrix:
        """The 2x2 flow part [[A_ss, A_sp], [A_ps, A_pp]] in field ordering."""
        b = self.blocks
        return sp.bmat([[b["ss"], b["sp"]], [b["ps"], b["pp"]]], format="csr")

    def to_csr(self) -> sp.csr_matrix:
        b = self.blocks
        return sp.bmat([[b[r + c] for c in BLOCKS] for r in BLOCKS], format="csr")


@dataclass
class ScalingRecord:
    """Block-row scaling factors (infinity norms of the diagonal blocks)."""

    c_u: float
    c_s: float
    c_p: float

    def as_tuple(self):
        return (self.c_u, self.c_s, self.c_p)


@dataclass
class Diagnostics:
    shut_in: int = 0


class PoroModel:
    """Discretized two-phase poromechanics problem on a structured grid.

    All parameters must already be in one consistent internal unit system.

    Args:
        grid: the mesh (with mechanics boundary tags).
        water, oil: wetting and non-wetting fluid models.
        relperm: relative permeability model.
        rock: rock model whose fields are scalars or per-cell arrays.
        perm: (n_cells, 3) principal permeabilities.
        gravity: magnitude of gravitational acceleration (acts along -z).
        wells: well specifications.
        tractions: optional side -> traction vector.
        dirichlet: optional ``(boundary_face_ids, p_bar, s_bar)`` for
            prescribed-pressure flow faces; all other faces are no-flow.
    """

    def __init__(self, grid: StructuredGrid, water: FluidModel, oil: FluidModel,
                 relperm: RelPermModel, rock: RockModel, perm, gravity: float,
                 wells=(), tractions=None, dirichlet=None):
        self.grid = grid
        self.water, self.oil, self.relperm = water, oil, relperm
        nc = grid.n_cells
        self.n_cells = nc
        self.rock = RockModel(*(np.broadcast_to(np.asarray(v, dtype=float), (nc,)).copy()
                                for v in (rock.E, rock.nu, rock.biot, rock.phi0,
                                          rock.rho_s)))
        self.perm = np.broadcast_to(np.asarray(perm, dtype=float), (nc, 3)).copy()
        self.gravity = float(gravity)
        self.tractions = dict(tractions or {})
        self.kern = q1_kernels(grid.cell_dims)
        self.dofs: DofMap = apply_bcs(grid, self.tractions)
        self.n_u = self.dofs.n_free
        self.volume = grid.cell_volume
        self.z = grid.cell_centroids[:, 2].copy()
        self.cp = porosity_p_coefficient(self.rock)
        self.K, self._grav_slots = elastic_stiffness(
            grid, self.dofs, self.kern, self.rock.lame_lambda, self.rock.shear_modulus)
        self.T, T_b = grid.transmissibilities(self.perm)
        fc = grid.face_cells
        self.fK, self.fL = fc[:, 0].copy(), fc[:, 1].copy()
        if dirichlet is None:
            self.bf = np.zeros(0, dtype=np.int64)
            self.bf_p = np.zeros(0)
            self.bf_s = np.zeros(0)
        else:
            bf, pb, sb = dirichlet
            self.bf = np.asarray(bf, dtype=np.int64)
            self.bf_p = np.broadcast_to(np.asarray(pb, dtype=float), self.bf.shape).copy()
            self.bf_s = np.broadcast_to(np.asarray(sb, dtype=float), self.bf.shape).copy()
        self.bf_cell = grid.bface_cell[self.bf]
        self.bf_T = T_b[self.bf]
        self.bf_z = grid.bface_center[self.bf, 2]
        self.wells = list(wells)
        self._setup_wells()
        self._setup_patterns()
        self.u_geo = np.zeros(self.n_u)
        self.ref = Reference(np.zeros((nc, 8)), np.zeros(nc), np.zeros(nc),
                             np.zeros(len(self.wells)))

    # -- setup ---------------------------------------------------------------
    def _setup_wells(self):
        cells, WI, wid = [], [], []
        h = self.grid.cell_dims
        for i, w in enumerate(self.wells):
            w.validate(self.grid)
            for c in w.cells:
                cells.append(int(c))
                WI.append(well_index(h, self.perm[c], w.r_w, w.skin, cell=int(c)))
                wid.append(i)
        self.conn_cell = np.array(cells, dtype=np.int64)
        self.conn_WI = np.array(WI, dtype=float)
        self.conn_well = np.array(wid, dtype=np.int64)
        self.conn_inj = np.array([self.wells[i].role == "injector" for i in wid], dtype=bool)
        self.conn_both = np.array([self.wells[i].inject_phase == "both" for i in wid],
                                  dtype=bool)
        self.well_z_bh = np.array([w.reference_elevation(self.grid) for w in self.wells])
        self.well_top_cell = np.array(
            [int(w.cells[np.argmax(self.grid.cell_centroids[w.cells, 2])])
             for w in self.wells], dtype=np.int64)

    def _setup_patterns(self):
        nc = self.n_cells
        cells = np.arange(nc)
        K, L = self.fK, self.fL
        rows = np.concatenate([cells, self.conn_cell, self.bf_cell, K, L, K, L])
        cols = np.concatenate([cells, self.conn_cell, self.bf_cell, K, L, L, K])
        self.flow_pattern = SparsePattern(rows, cols, (nc, nc))
        ef = self.dofs.edofs_free
        col_c = np.broadcast_to(cells[:, None], ef.shape)
        self.up_pattern = SparsePattern(ef, col_c, (self.n_u, nc))
        self.us_pattern = SparsePattern(ef[:, 16:24], col_c[:, 16:24], (self.n_u, nc))
        self.su_pattern = SparsePattern(col_c, ef, (nc, self.n_u))

    # -- wells ---------------------------------------------------------------
    def bhp(self, t: float) -> np.ndarray:
        """Bottomhole pressure per well at time ``t``."""
        out = np.empty(len(self.wells))
        for i, w in enumerate(self.wells):
            ramp = 1.0 if w.ramp_time <= 0 else min(max(t, 0.0) / w.ramp_time, 1.0)
            out[i] = self.ref.well_datum_p[i] + w.delta_bhp * ramp
        return out

    # -- evaluation ----------------------------------------------------------
    def strains(self, u: np.ndarray):
        ue = self.dofs.expand(u)[self.dofs.edofs]
        eps_q = ue @ self.kern.divq
        return eps_q, eps_q.mean(axis=1)

    def mass(self, state: SystemState) -> tuple[np.ndarray, np.ndarray]:
        """Phase masses per cell, ``(V phi s rho_w, V phi (1 - s) rho_nw)``."""
        _, eps_c = self.strains(state.u)
        phi, _, _ = porosity(self.rock, eps_c, state.p, self.ref.eps_c, self.ref.p,
                             warn=False)
        w, n = phase_properties(self.water, self.oil, self.relperm, state.s, state.p)
        return (self.volume * phi * state.s * w.rho,
                self.volume * phi * (1.0 - state.s) * n.rho)

    def assemble(self, state: SystemState, prev: SystemState, jacobian: bool = True,
                 prev_mass=None):
        """Evaluate the residual and optionally the Jacobian.

        Returns:
            ``(BlockResidual, BlockJacobian or None, Diagnostics)``.

        Raises:
            FloatingPointError: when a residual entry is not finite.
        """
        dt = state.dt
        if not dt > 0:
            raise ValueError("timestep must be positive")
        if prev_mass is None:
            prev_mass = self.mass(prev)
        rock, ref, kern, dofs = self.rock, self.ref, self.kern, self.dofs
        g = self.gravity
        V = self.volume
        s, p = state.s, state.p
        nc = self.n_cells
        eps_q, eps_c = self.strains(state.u)
        dpp = p - ref.p
        phi = rock.phi0 + rock.biot * (eps_c - ref.eps_c) + self.cp * dpp
        phi_q = (rock.phi0[:, None] + rock.biot[:, None] * (eps_q - ref.eps_q)
                 + (self.cp * dpp)[:, None])
        w, n = phase_properties(self.water, self.oil, self.relperm, s, p)
        fluid = s * w.rho + (1.0 - s) * n.rho
        contrast = fluid - rock.rho_s
        rho_q = rock.rho_s[:, None] + phi_q * contrast[:, None]

        # momentum
        bp = rock.biot * p
        full = -np.bincount(dofs.edofs.ravel(),
                            weights=(bp[:, None] * kern.bvol[None, :]).ravel(),
                            minlength=dofs.n_full)
        if g != 0.0:
            full += np.bincount(dofs.edofs[:, 16:24].ravel(),
                                weights=(g * rho_q @ kern.W.T).ravel(),
                                minlength=dofs.n_full)
        full -= dofs.traction
        r_u = self.K @ state.u + full[dofs.free]

        # accumulation
        m_w = V * phi * s * w.rho
        m_n = V * phi * (1.0 - s) * n.rho
        r_s = m_w - prev_mass[0]
        r_p = m_n - prev_mass[1]

        # interior faces
        K, L = self.fK, self.fL
        fw = tpfa_flux(self.T, self.z[K], self.z[L], p[K], p[L], w.take(K), w.take(L), g)
        fn = tpfa_flux(self.T, self.z[K], self.z[L], p[K], p[L], n.take(K), n.take(L), g)
        r_s += dt * (np.bincount(L, fw.F, nc) - np.bincount(K, fw.F, nc))
        r_p += dt * (np.bincount(L, fn.F, nc) - np.bincount(K, fn.F, nc))

        # prescribed-pressure boundary faces
        if self.bf.size:
            bw, bn = phase_properties(self.water, self.oil, self.relperm,
                                      self.bf_s, self.bf_p)
            C = self.bf_cell
            zC = self.z[C]
            gw = tpfa_flux(self.bf_T, zC, self.bf_z, p[C], self.bf_p, w.take(C), bw, g)
            gn = tpfa_flux(self.bf_T, zC, self.bf_z, p[C], self.bf_p, n.take(C), bn, g)
            r_s -= dt * np.bincount(C, gw.F, nc)
            r_p -= dt * np.bincount(C, gn.F, nc)

        # wells
        diag = Diagnostics()
        wt = None
        if self.conn_cell.size:
            C = self.conn_cell
            wid = self.conn_well
            wt = well_sources(C, self.conn_WI, self.bhp(state.t)[wid],
                              self.well_z_bh[wid], self.z[C], self.conn_inj,
                              self.conn_both, p[C], w.take(C), n.take(C), g)
            r_s -= dt * np.bincount(C, wt.q_w, nc)
            r_p -= dt * np.bincount(C, wt.q_nw, nc)
            diag.shut_in = wt.shut_in

        res = BlockResidual(r_u, r_s, r_p)
        _check_finite(res, self)
        if not jacobian:
            return res, None, diag

        # flow blocks in pattern input order:
        # [cells, connections, dirichlet faces, KK, LL, KL, LK]
        none_c = np.zeros(self.conn_cell.size)
        none_b = np.zeros(self.bf.size)
        if wt is None:
            wt = WellTerms(self.conn_cell, none_c, none_c, none_c, none_c, none_c,
                           none_c, none_c, none_c, 0)
        if self.bf.size:
            bsw, bpw, bsn, bpn = gw.dF_dsK, gw.dF_dpK, gn.dF_dsK, gn.dF_dpK
        else:
            bsw = bpw = bsn = bpn = none_b
        fp = self.flow_pattern
        acc_ss = V * phi * w.rho
        acc_sp = V * s * (w.rho * self.cp + phi * w.drho)
        acc_ps = -V * phi * n.rho
        acc_pp = V * (1.0 - s) * (n.rho * self.cp + phi * n.drho)
        blocks = {}
        blocks["ss"] = fp.assemble(np.concatenate([
            acc_ss, -dt * wt.dqw_ds, -dt * bsw, -dt * fw.dF_dsK, dt * fw.dF_dsL,
            -dt * fw.dF_dsL, dt * fw.dF_dsK]))
        blocks["sp"] = fp.assemble(np.concatenate([
            acc_sp, -dt * wt.dqw_dp, -dt * bpw, -dt * fw.dF_dpK, dt * fw.dF_dpL,
            -dt * fw.dF_dpL, dt * fw.dF_dpK]))
        blocks["ps"] = fp.assemble(np.concatenate([
            acc_ps, -dt * wt.dqnw_ds, -dt * bsn, -dt * fn.dF_dsK, dt * fn.dF_dsL,
            -dt * fn.dF_dsL, dt * fn.dF_dsK]))
        blocks["pp"] = fp.assemble(np.concatenate([
            acc_pp, -dt * wt.dqnw_dp, -dt * bpn, -dt * fn.dF_dpK, dt * fn.dF_dpL,
            -dt * fn.dF_dpL, dt * fn.dF_dpK]))

        # mechanics and couplings
        Auu = self.K.copy()
        if g != 0.0:
            drho_deps = contrast * rock.biot
            vals = g * drho_deps[:, None, None] * kern.T_grav[None]
            add = np.bincount(self._grav_slots.ravel(), weights=vals.ravel(),
                              minlength=Auu.nnz + 1)
            Auu.data += add[:Auu.nnz]
        blocks["uu"] = Auu
        blocks["us"] = self.us_pattern.assemble(
            g * (w.rho - n.rho)[:, None] * (phi_q @ kern.W.T))
        drho_dp_q = (contrast * self.cp)[:, None] + phi_q * (s * w.drho
                                                            + (1.0 - s) * n.drho)[:, None]
        up = np.broadcast_to(-rock.biot[:, None] * kern.bvol[None, :], (nc, 24)).copy()
        up[:, 16:24] += g * (drho_dp_q @ kern.W.T)
        blocks["up"] = self.up_pattern.assemble(up)
        bb = rock.biot[:, None] * kern.bvol[None, :]
        blocks["su"] = self.su_pattern.assemble((s * w.rho)[:, None] * bb)
        blocks["pu"] = self.su_pattern.assemble(((1.0 - s) * n.rho)[:, None] * bb)
        return res, BlockJacobian(blocks, self.n_u, nc), diag

    # -- thin single-face/single-connection views -----------------------------
    def face_flux(self, state: SystemState, f: int):
        """Phase fluxes and potentials of interior face ``f``.

        Returns:
            ``(F_w, F_nw, Phi_w, Phi_nw)``.
        """
        K, L = self.fK[f:f + 1], self.fL[f:f + 1]
        idx = np.concatenate([K, L])
        w, n = phase_properties(self.water, self.oil, self.relperm, state.s[idx],
                                state.p[idx])
        out = []
        for ph in (w, n):
            out.append(tpfa_flux(self.T[f:f + 1], self.z[K], self.z[L], state.p[K],
                                 state.p[L], ph.take([0]), ph.take([1]), self.gravity))
        return float(out[0].F[0]), float(out[1].F[0]), float(out[0].Phi[0]), float(out[1].Phi[0])


def assemble_residual(state: SystemState, prev: SystemState, model: PoroModel) -> BlockResidual:
    return model.assemble(state, prev, jacobian=False)[0]


def assemble_jacobian(state: SystemState, prev: SystemState, model: PoroModel) -> BlockJacobian:
    return model.assemble(state, prev, jacobian=True)[1]


def _check_finite(res: BlockResidual, model: PoroModel) -> None:
    for name, r in (("momentum", res.r_u), ("wetting mass", res.r_s),
                    ("non-wetting mass", res.r_p)):
        bad = np.nonzero(~np.isfinite(r))[0]
        if bad.size:
            i = int(bad[0])
            if name == "momentum":
                full = int(model.dofs.free[i])
                node, comp = full % model.grid.n_nodes, full // model.grid.n_nodes
                where = f"node {node} component {'xyz'[comp]}"
            else:
                where = f"cell {i}"
            raise FloatingPointError(f"non-finite {name} residual at {where}")


def row_scale(jac: BlockJacobian, res: BlockResidual | None = None,
              factors: ScalingRecord | None = None):
    """Divide each block row by the infinity norm of its diagonal block.

    A vanishing diagonal block (e.g. the non-wetting equation where that
    phase is absent everywhere) falls back to the norm of the whole block row.

    Args:
        jac: assembled Jacobian (left untouched).
        res: optional residual scaled with the same factors.
        factors: reuse these factors instead of computing them.

    Returns:
        ``(scaled_jacobian, scaled_residual or None, ScalingRecord)``.

    Raises:
        ValueError: if a whole block row is zero.
    """
    def inf_norm(A):
        return float(np.max(np.abs(A).sum(axis=1))) if A.nnz else 0.0

    if factors is None:
        norms = []
        for r in BLOCKS:
            nrm = inf_norm(jac.blocks[r + r])
            if not nrm > 0:
                nrm = inf_norm(sp.hstack([jac.blocks[r + c] for c in BLOCKS], format="csr"))
            if not nrm > 0:
                raise ValueError(f"block row {r} of the Jacobian is zero")
            norms.append(nrm)
        factors = ScalingRecord(*norms)
    f = dict(zip(BLOCKS, factors.as_tuple()))
    blocks = {k: v * (1.0 / f[k[0]]) for k, v in jac.blocks.items()}
    for v in blocks.values():
        v.sort_indices()
    old = jac.scale
    sj = BlockJacobian(blocks, jac.n_u, jac.n_c,
                       tuple(o * c for o, c in zip(old, factors.as_tuple())))
    sr = None
    if res is not None:
        sr = BlockResidual(res.r_u / factors.c_u, res.r_s / factors.c_s,
                           res.r_p / factors.c_p)
    return sj, sr, factors
