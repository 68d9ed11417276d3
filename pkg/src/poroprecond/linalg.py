"""Sparse kernels, restarted right-preconditioned GMRES, lumping primitives
and the saturation/pressure interleaving permutation."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

log = logging.getLogger(__name__)


class SparsePattern:
    """Fixed CSR pattern built from COO coordinates with a cached scatter map.

    Entries with a negative row or column are dropped. Repeated coordinates
    are summed. Reassembling with new values costs one ``np.bincount``.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        self.shape = (int(shape[0]), int(shape[1]))
        self.n_in = rows.size
        valid = (rows >= 0) & (cols >= 0)
        keys = rows[valid] * self.shape[1] + cols[valid]
        uniq, inv = np.unique(keys, return_inverse=True)
        self.nnz = uniq.size
        slot = np.full(rows.size, self.nnz, dtype=np.int64)
        slot[valid] = inv
        self.slot = slot
        r = uniq // self.shape[1]
        self.indices = (uniq % self.shape[1]).astype(np.int32)
        self.indptr = np.zeros(self.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=self.shape[0]), out=self.indptr[1:])

    def assemble(self, values) -> sp.csr_matrix:
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.n_in:
            raise ValueError("value count does not match the pattern inputs")
        data = np.bincount(self.slot, weights=values, minlength=self.nnz + 1)[:self.nnz]
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


@dataclass
class GMRESResult:
    """Outcome of a GMRES solve; ``converged`` is False on any failure."""

    x: np.ndarray
    iterations: int
    relres: float
    converged: bool
    residual_history: list


def _as_op(A) -> Callable[[np.ndarray], np.ndarray]:
    if A is None:
        return lambda v: v
    if callable(A) and not hasattr(A, "dot"):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda v: A @ v


def gmres(A, M, b, rel_tol: float = 1e-6, restart: int = 200, max_iter: int = 500,
          x0=None) -> GMRESResult:
    """Right-preconditioned restarted GMRES.

    Solves ``A M^-1 y = b`` and returns ``x = M^-1 y``. Orthogonalization is
    modified Gram-Schmidt with a second pass when cancellation is detected.
    The true residual is recomputed at every restart and at return, so the
    reported ``relres`` is ``||b - A x|| / ||b||``.

    Args:
        A: matrix, LinearOperator or callable applying the operator.
        M: preconditioner application (callable/matrix) or None for identity.
        b: right-hand side.
        rel_tol: target relative residual.
        restart: Krylov subspace size between restarts.
        max_iter: total iteration budget.
        x0: optional initial guess.
    """
    Aop = _as_op(A)
    Mop = _as_op(M)
    b = np.asarray(b, dtype=float)
    n = b.size
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return GMRESResult(np.zeros(n), 0, 0.0, True, [0.0])
    r = b - Aop(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    history = [beta / bnorm]
    total = 0
    if beta / bnorm <= rel_tol:
        return GMRESResult(x, 0, beta / bnorm, True, history)
    while total < max_iter:
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_done = 0
        for k in range(m):
            Z[k] = Mop(V[k])
            w = Aop(Z[k])
            wnorm0 = np.linalg.norm(w)
            for i in range(k + 1):
                H[i, k] = V[i] @ w
                w -= H[i, k] * V[i]
            if np.linalg.norm(w) < 0.7 * wnorm0:
                for i in range(k + 1):
                    c = V[i] @ w
                    H[i, k] += c
                    w -= c * V[i]
            hnext = np.linalg.norm(w)
            H[k + 1, k] = hnext
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            den = np.hypot(H[k, k], H[k + 1, k])
            if den == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / den, H[k + 1, k] / den
            H[k, k] = den
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_done = k + 1
            history.append(abs(g[k + 1]) / bnorm)
            # a zero new direction means the Krylov space is invariant
            if abs(g[k + 1]) / bnorm <= rel_tol or hnext <= 1e-14 * wnorm0:
                break
            V[k + 1] = w / hnext
        y = _back_substitute(H[:k_done, :k_done], g[:k_done])
        x = x + y @ Z[:k_done]
        r = b - Aop(x)
        beta = np.linalg.norm(r)
        if not np.isfinite(beta):
            return GMRESResult(x, total, float("inf"), False, history)
        if beta / bnorm <= rel_tol:
            return GMRESResult(x, total, beta / bnorm, True, history)
        if total < max_iter:
            log.warning("GMRES restart after %d iterations (relres %.3e)", total,
                        beta / bnorm)
    return GMRESResult(x, total, beta / bnorm, False, history)


def _back_substitute(R, g):
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i] if R[i, i] != 0 else 0.0
    return y


def column_sum_lump(A) -> np.ndarray:
    """Column sums, ``diag(A^T e)``."""
    return np.asarray(A.sum(axis=0)).ravel()


def diagm_extract(A, diagnostics: dict | None = None) -> np.ndarray:
    """Diagonal entries; structurally absent ones read as 0 and are flagged."""
    A = sp.csr_matrix(A)
    d = A.diagonal()
    if diagnostics is not None:
        present = np.zeros(min(A.shape), dtype=bool)
        rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        on = rows == A.indices
        present[rows[on]] = True
        diagnostics["missing_diagonal"] = np.nonzero(~present)[0]
    return d


class InterleavePermutation:
    """Map field ordering [s_1..s_n, p_1..p_n] to cell ordering [s_1, p_1, ...]."""

    def __init__(self, n_cells: int):
        self.n = int(n_cells)
        self.perm = np.empty(2 * self.n, dtype=np.int64)
        self.perm[0::2] = np.arange(self.n)
        self.perm[1::2] = np.arange(self.n, 2 * self.n)

    def matrix(self) -> sp.csr_matrix:
        m = 2 * self.n
        return sp.csr_matrix((np.ones(m), (np.arange(m), self.perm)), shape=(m, m))

    def forward(self, x):
        x = np.asarray(x)
        if x.shape[0] != 2 * self.n:
            raise ValueError("vector length does not match the permutation")
        return x[self.perm]

    def backward(self, y):
        y = np.asarray(y)
        if y.shape[0] != 2 * self.n:
            raise ValueError("vector length does not match the permutation")
        out = np.empty_like(y)
        out[self.perm] = y
        return out

    def matrix_forward(self, A) -> sp.csr_matrix:
        A = sp.csr_matrix(A)
        if A.shape != (2 * self.n, 2 * self.n):
            raise ValueError("matrix shape does not match the permutation")
        return A[self.perm][:, self.perm].tocsr()


def interleave(obj, P: InterleavePermutation):
    """Apply ``P`` to a vector (``P x``) or a matrix (``P A P^T``)."""
    if sp.issparse(obj) or (isinstance(obj, np.ndarray) and obj.ndim == 2):
        return P.matrix_forward(obj)
    return P.forward(obj)


def export_matrix_market(path, A) -> None:
    """Write a sparse matrix in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
