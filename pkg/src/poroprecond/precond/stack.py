"""Two-stage block preconditioner: mechanics AMG, fixed-stress flow Schur
complement, CPR pressure AMG and a local second-stage smoother."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..linalg import GMRESResult, InterleavePermutation
from .amg import AMGHierarchy, AMGParams
from .cpr import CPRReduction, cpr_reduce
from .fixed_stress import (FixedStressFlowMatrix, augment, build_fixed_stress,
                           build_rsl_diagonals)
from .smoothers import local_smoother

log = logging.getLogger(__name__)


@dataclass
class PrecondOptions:
    """Preconditioner configuration.

    Attributes:
        cpr_mode: ``"quasi"``, ``"true"`` or ``"rsl"``. ``"rsl"`` replaces the
            fixed-stress diagonals with row-sum-lumped ones and keeps the
            quasi-IMPES reduction.
        second_stage: ``"bgs"`` or ``"ilu0"``.
        bgs_sweeps: forward block Gauss-Seidel sweeps.
        amg_strength: classical strength-of-connection threshold.
        amg_max_coarse: rows at which the hierarchy switches to a direct solve.
        mech_amg: coarsening of the elasticity components, ``"aggregation"``
            or ``"classical"``.
        fs_modulus_scale: multiplier on K_dr in the fixed-stress diagonals.
        rsl_tol: relative tolerance of the RSL mechanics solve.
        record: keep per-application second-stage reduction ratios.
    """

    cpr_mode: str = "quasi"
    second_stage: str = "bgs"
    bgs_sweeps: int = 3
    amg_strength: float = 0.25
    amg_max_coarse: int = 64
    mech_amg: str = "aggregation"
    fs_modulus_scale: float = 1.0
    rsl_tol: float = 1e-8
    record: bool = False

    def __post_init__(self):
        if self.cpr_mode not in ("quasi", "true", "rsl"):
            raise ValueError(f"unknown cpr_mode '{self.cpr_mode}'")
        if self.second_stage not in ("bgs", "ilu0"):
            raise ValueError(f"unknown second_stage '{self.second_stage}'")
        if self.bgs_sweeps < 1:
            raise ValueError("bgs_sweeps must be >= 1")
        if not self.fs_modulus_scale > 0:
            raise ValueError("fs_modulus_scale must be positive")

    def amg_params(self) -> AMGParams:
        """Pressure AMG options."""
        return AMGParams(strength=self.amg_strength, max_coarse=self.amg_max_coarse)

    def mech_amg_params(self) -> AMGParams:
        return AMGParams(method=self.mech_amg, strength=self.amg_strength,
                         max_coarse=self.amg_max_coarse)


def component_index(model) -> list[np.ndarray]:
    """Positions in the free displacement vector of x, y and z components."""
    comp = model.dofs.free // model.grid.n_nodes
    return [np.nonzero(comp == c)[0] for c in range(3)]


def build_sdc(A_uu, comps: list[np.ndarray]) -> sp.csr_matrix:
    """Block-diagonal-by-component elasticity matrix (cross-component blocks dropped)."""
    A = sp.csr_matrix(A_uu)
    label = np.empty(A.shape[0], dtype=np.int64)
    for c, idx in enumerate(comps):
        label[idx] = c
    C = A.tocoo()
    keep = label[C.row] == label[C.col]
    out = sp.csr_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=A.shape)
    out.sort_indices()
    return out


class MechanicsPreconditioner:
    """Separate-displacement-component AMG for the elasticity block.

    Built once from the elastic stiffness; application to a row-scaled
    system multiplies by that system's displacement row factor.

    Args:
        K: free-DoF elastic stiffness matrix.
        comps: component index lists from :func:`component_index`.
        params: AMG options.
        direct: use sparse LU on the full matrix instead (exact variant).
    """

    def __init__(self, K, comps, params: AMGParams | None = None, direct: bool = False):
        t0 = time.perf_counter()
        self.n = K.shape[0]
        self.comps = comps
        self.direct = direct
        if direct:
            self._lu = spla.splu(sp.csc_matrix(K))
            self.amgs = []
        else:
            K = sp.csr_matrix(K)
            self.amgs = [AMGHierarchy(K[idx][:, idx], params) for idx in comps]
        self.setup_time = time.perf_counter() - t0

    def apply(self, v: np.ndarray, scale: float = 1.0) -> np.ndarray:
        if self.direct:
            return scale * self._lu.solve(v)
        z = np.empty_like(v)
        for idx, amg in zip(self.comps, self.amgs):
            z[idx] = amg.apply(v[idx])
        return scale * z

    def solve(self, b: np.ndarray, tol: float = 1e-8, maxiter: int = 200,
              A=None) -> tuple[np.ndarray, bool]:
        """Approximate ``A^-1 b`` with preconditioned CG (A defaults to the setup matrix)."""
        if self.direct:
            return self._lu.solve(b), True
        if A is None:
            raise ValueError("matrix required for an iterative mechanics solve")
        M = spla.LinearOperator(A.shape, matvec=self.apply)
        x, info = spla.cg(A, b, rtol=tol, maxiter=maxiter, M=M)
        return x, info == 0


@dataclass
class StackDiagnostics:
    setup_time: float = 0.0
    second_stage_ratio: list = field(default_factory=list)
    n_apply: int = 0


class PreconditionerStack:
    """Operands of the two-stage preconditioner for one Jacobian.

    Use :meth:`build` for the production preconditioner and :meth:`exact` for
    the variant with direct sub-solves and the exact flow Schur complement.
    """

    def __init__(self, jac, mech, mech_scale, fs: FixedStressFlowMatrix,
                 cpr: CPRReduction, M_pp, M_L, perm: InterleavePermutation,
                 record: bool = False):
        self.jac = jac
        self.mech = mech
        self.mech_scale = mech_scale
        self.fs = fs
        self.cpr = cpr
        self.M_pp = M_pp
        self.M_L = M_L
        self.P = perm
        self.record = record
        self.diag = StackDiagnostics()

    @classmethod
    def build(cls, jac, model, state, mech: MechanicsPreconditioner,
              options: PrecondOptions | None = None) -> "PreconditionerStack":
        """Assemble the flow operands against ``jac`` (scaled or not).

        ``mech`` must have been built from the unscaled elastic stiffness.
        """
        opt = options or PrecondOptions()
        t0 = time.perf_counter()
        c_u = jac.scale[0]
        if opt.cpr_mode == "rsl":
            A_uu = jac["uu"]
            d_sp, d_pp = build_rsl_diagonals(jac, lambda r, t: _rsl_solve(mech, A_uu, r, t, c_u),
                                             opt.rsl_tol)
            fs = augment(jac["ss"], jac["sp"], jac["ps"], jac["pp"], d_sp, d_pp)
            mode = "quasi"
        else:
            fs = build_fixed_stress(jac, model, state, opt.fs_modulus_scale)
            mode = opt.cpr_mode
        cpr = cpr_reduce(fs.A_ss, fs.A_sp_fs, fs.A_ps, fs.A_pp_fs, mode)
        M_pp = AMGHierarchy(cpr.S_pp, opt.amg_params())
        P = InterleavePermutation(jac.n_c)
        M_L = local_smoother(P.matrix_forward(fs.matrix()), opt.second_stage, opt.bgs_sweeps)
        stack = cls(jac, mech, c_u, fs, cpr, M_pp.apply, M_L.apply, P, opt.record)
        stack.diag.setup_time = time.perf_counter() - t0
        return stack

    @classmethod
    def exact(cls, jac) -> "PreconditionerStack":
        """Direct sub-solves with the exact (dense) first-level Schur complement.

        Only for small systems; the resulting operator inverts the
        block-lower-triangular factor of the Jacobian exactly.
        """
        A_uu = sp.csc_matrix(jac["uu"])
        lu = spla.splu(A_uu)
        A_uf = sp.hstack([jac["us"], jac["up"]]).toarray()
        X = lu.solve(A_uf)
        Su = np.vstack([jac["su"].toarray(), jac["pu"].toarray()]) @ X
        n = jac.n_c
        A_ss = jac["ss"].toarray() - Su[:n, :n]
        A_sp = jac["sp"].toarray() - Su[:n, n:]
        A_ps = jac["ps"].toarray() - Su[n:, :n]
        A_pp = jac["pp"].toarray() - Su[n:, n:]
        fs = FixedStressFlowMatrix(sp.csr_matrix(A_ss), sp.csr_matrix(A_sp),
                                   sp.csr_matrix(A_ps), sp.csr_matrix(A_pp),
                                   np.zeros(n), np.zeros(n))
        cpr = cpr_reduce(fs.A_ss, fs.A_sp_fs, fs.A_ps, fs.A_pp_fs, "quasi")
        pp_lu = sla.lu_factor(cpr.S_pp.toarray())
        P = InterleavePermutation(n)
        L_lu = sla.lu_factor(P.matrix_forward(fs.matrix()).toarray())

        class _Direct:
            def apply(self, v, scale=1.0):
                return scale * lu.solve(v)

        return cls(jac, _Direct(), 1.0, fs, cpr, lambda b: sla.lu_solve(pp_lu, b),
                   lambda b: sla.lu_solve(L_lu, b), P)

    # -- application -----------------------------------------------------------
    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply the preconditioner to ``v = [v_u; v_s; v_p]``.

        Raises:
            ValueError: on a length mismatch.
        """
        jac = self.jac
        nu, nc = jac.n_u, jac.n_c
        if v.size != nu + 2 * nc:
            raise ValueError(f"expected a vector of length {nu + 2 * nc}, got {v.size}")
        v_u, v_s, v_p = v[:nu], v[nu:nu + nc], v[nu + nc:]
        z_u = self.mech.apply(v_u, self.mech_scale)
        y_s = v_s - jac["su"] @ z_u
        y_p = v_p - jac["pu"] @ z_u
        z_s = self.cpr.D_ss_inv * y_s
        w_p = y_p - self.fs.A_ps @ z_s
        z_p = self.M_pp(w_p)
        Sz_s, Sz_p = self.fs.matvec(z_s, z_p)
        w = np.concatenate([y_s - Sz_s, y_p - Sz_p])
        dz = self.P.backward(self.M_L(self.P.forward(w)))
        if self.record:
            Sd = np.concatenate(self.fs.matvec(dz[:nc], dz[nc:]))
            wn = np.linalg.norm(w)
            self.diag.second_stage_ratio.append(
                np.linalg.norm(w - Sd) / wn if wn > 0 else 0.0)
        self.diag.n_apply += 1
        return np.concatenate([z_u, z_s + dz[:nc], z_p + dz[nc:]])

    __call__ = apply


def _rsl_solve(mech: MechanicsPreconditioner, A_uu, rhs, tol, c_u):
    # A_uu carries the row factor c_u while the elastic preconditioner does not
    M = spla.LinearOperator(A_uu.shape, matvec=lambda r: mech.apply(r, c_u))
    x, info = spla.gmres(A_uu, rhs, rtol=tol, restart=100, maxiter=20, M=M)
    return x, info == 0


def apply(stack: PreconditionerStack, v: np.ndarray) -> np.ndarray:
    return stack.apply(v)


def richardson(A, M, b, rel_tol: float = 1e-6, max_iter: int = 500) -> GMRESResult:
    """Stationary iteration ``x <- x + M^-1 (b - A x)`` from x = 0."""
    Aop = A.matvec if hasattr(A, "matvec") else (lambda v: A @ v)
    b = np.asarray(b, dtype=float)
    bn = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bn == 0:
        return GMRESResult(x, 0, 0.0, True, [0.0])
    r = b.copy()
    hist = [1.0]
    for k in range(1, max_iter + 1):
        x += M(r)
        r = b - Aop(x)
        rel = np.linalg.norm(r) / bn
        hist.append(rel)
        if not np.isfinite(rel):
            return GMRESResult(x, k, float("inf"), False, hist)
        if rel <= rel_tol:
            return GMRESResult(x, k, rel, True, hist)
    return GMRESResult(x, max_iter, hist[-1], False, hist)
