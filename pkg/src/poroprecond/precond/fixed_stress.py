"""First-level (mechanics-eliminated) flow Schur complement approximations."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


@dataclass
class FixedStressFlowMatrix:
    """Flow blocks with diagonal mechanics surrogates added.

    ``A_sp_fs = A_sp + diag(D_sp)`` and ``A_pp_fs = A_pp + diag(D_pp)``; the
    sparsity pattern matches the original flow blocks.
    """

    A_ss: sp.csr_matrix
    A_sp_fs: sp.csr_matrix
    A_ps: sp.csr_matrix
    A_pp_fs: sp.csr_matrix
    D_sp: np.ndarray
    D_pp: np.ndarray

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A_ss, self.A_sp_fs], [self.A_ps, self.A_pp_fs]],
                       format="csr")

    def matvec(self, zs, zp):
        return (self.A_ss @ zs + self.A_sp_fs @ zp, self.A_ps @ zs + self.A_pp_fs @ zp)


def fixed_stress_diagonals(volume, biot, K_dr, s, rho_w, rho_nw, modulus_scale=1.0):
    """Diagonal fixed-stress entries ``V b^2 / K s rho_w`` and ``V b^2 / K (1-s) rho_nw``.

    ``K = modulus_scale * K_dr``, so the uniaxial-modulus variant is reached
    with ``modulus_scale = K_v / K_dr``.

    Raises:
        ValueError: for a non-positive cell volume.
    """
    volume = np.asarray(volume, dtype=float)
    if np.any(volume <= 0):
        raise ValueError("cell volume must be positive")
    c = volume * np.asarray(biot) ** 2 / (modulus_scale * np.asarray(K_dr))
    s = np.asarray(s, dtype=float)
    return c * s * rho_w, c * (1.0 - s) * rho_nw


def _with_diagonal(A: sp.csr_matrix, d: np.ndarray) -> sp.csr_matrix:
    """A + diag(d) keeping A's pattern (A must have a full diagonal)."""
    B = A.copy()
    B.sort_indices()
    n = B.shape[0]
    rows = np.repeat(np.arange(n), np.diff(B.indptr))
    on = np.nonzero(rows == B.indices)[0]
    if on.size != n:
        return sp.csr_matrix(A + sp.diags(d))
    B.data[on] += d[rows[on]]
    return B


def augment(A_ss, A_sp, A_ps, A_pp, D_sp, D_pp) -> FixedStressFlowMatrix:
    return FixedStressFlowMatrix(A_ss, _with_diagonal(A_sp, D_sp), A_ps,
                                 _with_diagonal(A_pp, D_pp), D_sp, D_pp)


def build_fixed_stress(jac, model, state, modulus_scale: float = 1.0) -> FixedStressFlowMatrix:
    """Fixed-stress flow matrix for a (possibly row-scaled) Jacobian.

    The diagonals are divided by the Jacobian's saturation/pressure row
    factors so they stay consistent with scaled blocks.
    """
    from ..assembly.flow import phase_properties

    w, n = phase_properties(model.water, model.oil, model.relperm, state.s, state.p)
    d_sp, d_pp = fixed_stress_diagonals(model.volume, model.rock.biot, model.rock.K_dr,
                                        state.s, w.rho, n.rho, modulus_scale)
    _, c_s, c_p = jac.scale
    return augment(jac["ss"], jac["sp"], jac["ps"], jac["pp"], d_sp / c_s, d_pp / c_p)


def build_rsl_diagonals(jac, mech_solve: Callable[[np.ndarray], tuple], tol: float = 1e-8):
    """Row-sum-lumped surrogates ``-A_su A_uu^-1 A_up e`` and ``-A_pu A_uu^-1 A_up e``.

    Args:
        jac: Jacobian blocks.
        mech_solve: ``f(rhs, tol) -> (x, converged)`` approximating A_uu^-1.
        tol: relative tolerance handed to ``mech_solve``.

    Returns:
        ``(D_sp, D_pp)`` as vectors. A non-converged mechanics solve only
        warns.
    """
    e = np.ones(jac.n_c)
    rhs = jac["up"] @ e
    if not np.any(rhs):
        return np.zeros(jac.n_c), np.zeros(jac.n_c)
    y, ok = mech_solve(rhs, tol)
    if not ok:
        log.warning("RSL mechanics solve did not reach tolerance %.1e", tol)
    return -(jac["su"] @ y), -(jac["pu"] @ y)
