"""Second-stage local smoothers on the interleaved flow matrix.

Both act on ``P S P^T`` where cell ``i`` owns rows ``2i`` (saturation) and
``2i + 1`` (pressure). Singular cell blocks and zero ILU pivots are shifted by
``1e-12`` times the local diagonal scale and counted in ``n_perturbed``.
"""
from __future__ import annotations

import logging

import numba
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

PERTURB = 1e-12


@numba.njit(cache=True)
def _invert_blocks(diag, eps):
    n = diag.shape[0]
    inv = np.empty_like(diag)
    n_bad = 0
    for i in range(n):
        a, b = diag[i, 0, 0], diag[i, 0, 1]
        c, d = diag[i, 1, 0], diag[i, 1, 1]
        scale = max(abs(a), abs(b), abs(c), abs(d))
        if scale == 0.0:
            scale = 1.0
        det = a * d - b * c
        if abs(det) <= 1e-14 * scale * scale:
            a += eps * scale
            d += eps * scale
            det = a * d - b * c
            n_bad += 1
        inv[i, 0, 0] = d / det
        inv[i, 0, 1] = -b / det
        inv[i, 1, 0] = -c / det
        inv[i, 1, 1] = a / det
    return inv, n_bad


@numba.njit(cache=True)
def _bgs_sweeps(indptr, indices, data, dinv, b, x, sweeps):
    n = indptr.size - 1
    for _ in range(sweeps):
        for i in range(n):
            r0 = b[2 * i]
            r1 = b[2 * i + 1]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j == i:
                    continue
                r0 -= data[k, 0, 0] * x[2 * j] + data[k, 0, 1] * x[2 * j + 1]
                r1 -= data[k, 1, 0] * x[2 * j] + data[k, 1, 1] * x[2 * j + 1]
            x[2 * i] = dinv[i, 0, 0] * r0 + dinv[i, 0, 1] * r1
            x[2 * i + 1] = dinv[i, 1, 0] * r0 + dinv[i, 1, 1] * r1


class BlockGaussSeidel:
    """Forward block Gauss-Seidel with dense 2x2 cell blocks.

    Args:
        A: interleaved flow matrix (2n x 2n).
        sweeps: number of forward sweeps from a zero initial guess.
    """

    def __init__(self, A, sweeps: int = 3):
        B = sp.bsr_matrix(sp.csr_matrix(A), blocksize=(2, 2))
        B.sort_indices()
        self.sweeps = int(sweeps)
        self.indptr = B.indptr.astype(np.int64)
        self.indices = B.indices.astype(np.int64)
        self.data = np.ascontiguousarray(B.data)
        n = B.shape[0] // 2
        diag = np.zeros((n, 2, 2))
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        on = rows == self.indices
        diag[rows[on]] = self.data[on]
        self.dinv, self.n_perturbed = _invert_blocks(diag, PERTURB)
        if self.n_perturbed:
            log.warning("block Gauss-Seidel: %d singular cell blocks perturbed",
                        self.n_perturbed)

    def apply(self, b: np.ndarray) -> np.ndarray:
        x = np.zeros(b.size)
        _bgs_sweeps(self.indptr, self.indices, self.data, self.dinv,
                    np.ascontiguousarray(b, dtype=float), x, self.sweeps)
        return x

    __call__ = apply


@numba.njit(cache=True)
def _ilu0_factor(indptr, indices, data, diag_pos, eps):
    n = indptr.size - 1
    lu = data.copy()
    n_bad = 0
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = k
        for kk in range(indptr[i], diag_pos[i]):
            k = indices[kk]
            lu[kk] /= lu[diag_pos[k]]
            lik = lu[kk]
            for jj in range(diag_pos[k] + 1, indptr[k + 1]):
                p = pos[indices[jj]]
                if p >= 0:
                    lu[p] -= lik * lu[jj]
        d = lu[diag_pos[i]]
        scale = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            scale = max(scale, abs(data[k]))
        if scale == 0.0:
            scale = 1.0
        if abs(d) <= 1e-14 * scale:
            lu[diag_pos[i]] = d + eps * scale if d >= 0 else d - eps * scale
            n_bad += 1
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = -1
    return lu, n_bad


@numba.njit(cache=True)
def _ilu0_solve(indptr, indices, lu, diag_pos, b):
    n = indptr.size - 1
    y = b.copy()
    for i in range(n):
        s = y[i]
        for k in range(indptr[i], diag_pos[i]):
            s -= lu[k] * y[indices[k]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= lu[k] * y[indices[k]]
        y[i] = s / lu[diag_pos[i]]
    return y


class ILU0:
    """Pointwise incomplete LU with zero fill on the given pattern."""

    def __init__(self, A):
        C = sp.coo_matrix(A, dtype=float)
        n = C.shape[0]
        # make every diagonal structurally present (coo -> csr keeps zeros)
        ar = np.arange(n)
        A = sp.coo_matrix((np.concatenate([C.data, np.zeros(n)]),
                           (np.concatenate([C.row, ar]), np.concatenate([C.col, ar]))),
                          shape=C.shape).tocsr()
        A.sort_indices()
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        self.diag_pos = np.nonzero(rows == self.indices)[0].astype(np.int64)
        if self.diag_pos.size != n:
            raise ValueError("ILU(0) needs a structurally present diagonal")
        self.lu, self.n_perturbed = _ilu0_factor(self.indptr, self.indices,
                                                 A.data.astype(float), self.diag_pos,
                                                 PERTURB)
        if self.n_perturbed:
            log.warning("ILU(0): %d zero pivots perturbed", self.n_perturbed)

    def apply(self, b: np.ndarray) -> np.ndarray:
        return _ilu0_solve(self.indptr, self.indices, self.lu, self.diag_pos,
                           np.ascontiguousarray(b, dtype=float))

    __call__ = apply


def local_smoother(A, kind: str = "bgs", sweeps: int = 3):
    """Build the second-stage smoother ``M_L`` on an interleaved matrix."""
    if kind == "bgs":
        return BlockGaussSeidel(A, sweeps)
    if kind == "ilu0":
        return ILU0(A)
    raise ValueError(f"unknown local smoother '{kind}'")


def local_smoother_apply(M_L, w: np.ndarray) -> np.ndarray:
    return M_L.apply(w)
