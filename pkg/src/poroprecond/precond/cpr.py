"""CPR second-level reduction of the flow Schur complement to pressure."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..linalg import column_sum_lump, diagm_extract

log = logging.getLogger(__name__)


@dataclass
class CPRReduction:
    """Diagonal saturation surrogates and the sparse pressure operator.

    ``D_ss_inv`` is zero for cells whose ``D_ss`` vanished; those cells get
    no saturation correction (listed in ``skipped``).
    """

    D_ss: np.ndarray
    D_ps: np.ndarray
    S_pp: sp.csr_matrix
    D_ss_inv: np.ndarray
    skipped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def cpr_reduce(A_ss, A_sp_fs, A_ps, A_pp_fs, mode: str = "quasi") -> CPRReduction:
    """Form ``S_pp = A_pp_fs - D_ps D_ss^-1 A_sp_fs``.

    Args:
        mode: ``"quasi"`` extracts diagonals, ``"true"`` lumps column sums.
    """
    if mode == "quasi":
        d_ss, d_ps = diagm_extract(A_ss), diagm_extract(A_ps)
    elif mode == "true":
        d_ss, d_ps = column_sum_lump(A_ss), column_sum_lump(A_ps)
    else:
        raise ValueError(f"unknown CPR mode '{mode}'")
    bad = np.nonzero(d_ss == 0)[0]
    inv = np.zeros_like(d_ss)
    ok = d_ss != 0
    inv[ok] = 1.0 / d_ss[ok]
    if bad.size:
        log.warning("CPR: %d cells with zero D_ss skipped", bad.size)
    S_pp = _subtract_row_scaled(sp.csr_matrix(A_pp_fs), sp.csr_matrix(A_sp_fs), d_ps * inv)
    return CPRReduction(d_ss, d_ps, S_pp, inv, bad)


def _subtract_row_scaled(A, B, d):
    """A - diag(d) B, computed in place on A's pattern when B shares it."""
    A.sort_indices()
    B.sort_indices()
    if (A.shape == B.shape and np.array_equal(A.indptr, B.indptr)
            and np.array_equal(A.indices, B.indices)):
        rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        return sp.csr_matrix((A.data - d[rows] * B.data, A.indices.copy(),
                              A.indptr.copy()), shape=A.shape)
    out = sp.csr_matrix(A - sp.diags(d) @ B)
    out.sort_indices()
    return out
