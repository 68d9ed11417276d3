"""Trilinear (Q1) hexahedral element kernels and displacement DoF bookkeeping.

Displacement DoFs are numbered component-major: ``dof = comp * n_nodes + node``.
Local element DoFs follow the same layout, ``comp * 8 + a`` with local node
``a = i + 2j + 4k`` at offset (i, j, k) from the element's lower corner.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..grid import SIDES, StructuredGrid

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_LOCAL = np.array([[a & 1, (a >> 1) & 1, (a >> 2) & 1] for a in range(8)])


@dataclass(frozen=True)
class ElementKernels:
    """Per-element integrals on an undistorted brick of size ``h``.

    Attributes:
        N: (8 qp, 8 nodes) shape function values.
        wdet: (8,) quadrature weight times Jacobian determinant.
        divq: (24, 8) divergence of each local basis function at each qp.
        K_lambda, K_mu: (24, 24) stiffness parts, K = lambda K_lambda + mu K_mu.
        bvol: (24,) integral of div(eta) over the element.
        W: (8, 8) ``W[a, q] = wdet[q] * N[q, a]`` for body-force integrals.
        T_grav: (8, 24) ``W @ divq.T``, the gravity-strain coupling.
    """

    h: np.ndarray
    N: np.ndarray
    wdet: np.ndarray
    divq: np.ndarray
    B: np.ndarray
    K_lambda: np.ndarray
    K_mu: np.ndarray
    bvol: np.ndarray
    W: np.ndarray
    T_grav: np.ndarray


def q1_kernels(h) -> ElementKernels:
    """Integrate the Q1 element matrices with 2x2x2 Gauss quadrature."""
    h = np.asarray(h, dtype=float)
    sgn = 2.0 * _LOCAL - 1.0  # node reference coordinates in {-1, 1}
    qpts = np.array([[_GAUSS[a & 1], _GAUSS[(a >> 1) & 1], _GAUSS[(a >> 2) & 1]]
                     for a in range(8)])
    det = np.prod(h) / 8.0
    wdet = np.full(8, det)
    N = np.empty((8, 8))
    B = np.zeros((8, 6, 24))
    divq = np.zeros((24, 8))
    for q, xi in enumerate(qpts):
        fac = 1.0 + sgn * xi  # (8, 3)
        N[q] = np.prod(fac, axis=1) / 8.0
        grad = np.empty((8, 3))
        for d in range(3):
            others = [e for e in range(3) if e != d]
            grad[:, d] = sgn[:, d] * fac[:, others[0]] * fac[:, others[1]] / 8.0
            grad[:, d] *= 2.0 / h[d]
        for d in range(3):
            B[q, d, d * 8:(d + 1) * 8] = grad[:, d]
            divq[d * 8:(d + 1) * 8, q] = grad[:, d]
        # engineering shear strains yz, xz, xy
        for row, (d1, d2) in zip((3, 4, 5), ((1, 2), (0, 2), (0, 1))):
            B[q, row, d1 * 8:(d1 + 1) * 8] = grad[:, d2]
            B[q, row, d2 * 8:(d2 + 1) * 8] = grad[:, d1]
    Dmu = np.diag([2.0, 2.0, 2.0, 1.0, 1.0, 1.0])
    K_lambda = np.einsum("q,iq,jq->ij", wdet, divq, divq)
    K_mu = np.einsum("q,qki,kl,qlj->ij", wdet, B, Dmu, B)
    bvol = divq @ wdet
    W = (N * wdet[:, None]).T
    return ElementKernels(h, N, wdet, divq, B, K_lambda, K_mu, bvol, W, W @ divq.T)


@dataclass
class DofMap:
    """Free/constrained displacement DoFs plus the external traction load.

    Attributes:
        n_full: 3 * n_nodes.
        free: sorted free full-DoF ids; the solver's displacement vector.
        full_to_free: full id -> free id, -1 when constrained.
        edofs: (n_cells, 24) full DoF ids per element.
        edofs_free: (n_cells, 24) free ids per element, -1 when constrained.
        traction: (n_full,) consistent nodal traction load.
    """

    n_full: int
    free: np.ndarray
    full_to_free: np.ndarray
    edofs: np.ndarray
    edofs_free: np.ndarray
    traction: np.ndarray

    @property
    def n_free(self) -> int:
        return self.free.size

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_full)
        out[self.free] = u_free
        return out


def _side_nodes(grid: StructuredGrid, side: str) -> np.ndarray:
    ax, hi = SIDES.index(side) // 2, SIDES.index(side) % 2
    n = np.arange(grid.n_nodes)
    nx1, ny1 = grid.nx + 1, grid.ny + 1
    ijk = (n % nx1, (n // nx1) % ny1, n // (nx1 * ny1))
    lim = (grid.nx, grid.ny, grid.nz)[ax]
    return n[ijk[ax] == (lim if hi else 0)]


def apply_bcs(grid: StructuredGrid, tractions: dict | None = None) -> DofMap:
    """Classify displacement DoFs and assemble the traction load.

    Rollers fix the normal component on their side, ``fixed`` fixes all three
    components and ``free`` fixes none. Constrained DoFs are removed from the
    unknown vector (prescribed value zero).

    Args:
        grid: mesh carrying ``mech_bc`` tags.
        tractions: optional map side -> traction vector (force per area).

    Raises:
        ValueError: if a DoF is both constrained and loaded.
    """
    nn = grid.n_nodes
    n_full = 3 * nn
    fixed = np.zeros(n_full, dtype=bool)
    for side in SIDES:
        tag = grid.mech_bc.get(side, "free")
        nodes = _side_nodes(grid, side)
        if tag == "roller":
            fixed[(SIDES.index(side) // 2) * nn + nodes] = True
        elif tag == "fixed":
            for c in range(3):
                fixed[c * nn + nodes] = True
    load = np.zeros(n_full)
    h = grid.cell_dims
    for side, vec in (tractions or {}).items():
        if side not in SIDES:
            raise ValueError(f"unknown traction side '{side}'")
        vec = np.asarray(vec, dtype=float)
        ax = SIDES.index(side) // 2
        area = np.prod(np.delete(h, ax))
        # each face spreads its force equally to its 4 nodes
        nodes = _side_nodes(grid, side)
        nxy = [grid.nx, grid.ny, grid.nz]
        nxy.pop(ax)
        nx1, ny1 = grid.nx + 1, grid.ny + 1
        coords = np.stack((nodes % nx1, (nodes // nx1) % ny1, nodes // (nx1 * ny1)), 1)
        tang = np.delete(coords, ax, axis=1)
        mult = np.ones(nodes.size)
        for t, n_t in zip(tang.T, nxy):
            mult *= np.where((t == 0) | (t == n_t), 1.0, 2.0)
        for c in range(3):
            if vec[c] == 0:
                continue
            dofs = c * nn + nodes
            if np.any(fixed[dofs]):
                raise ValueError(f"traction component {c} on side '{side}' loads "
                                 "constrained displacement DoFs")
            np.add.at(load, dofs, vec[c] * area * mult / 4.0)
    free = np.nonzero(~fixed)[0]
    f2f = np.full(n_full, -1, dtype=np.int64)
    f2f[free] = np.arange(free.size)
    cn = grid.cell_nodes
    edofs = np.concatenate([cn + c * nn for c in range(3)], axis=1)
    return DofMap(n_full, free, f2f, edofs, f2f[edofs], load)


def node_adjacency(grid: StructuredGrid) -> sp.csr_matrix:
    """Boolean 27-point node-to-node adjacency (nodes sharing an element)."""
    nx1, ny1, nz1 = grid.nx + 1, grid.ny + 1, grid.nz + 1
    n = np.arange(grid.n_nodes)
    i, j, k = n % nx1, (n // nx1) % ny1, n // (nx1 * ny1)
    rows, cols = [], []
    for dk in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                ok = ((i + di >= 0) & (i + di < nx1) & (j + dj >= 0) & (j + dj < ny1)
                      & (k + dk >= 0) & (k + dk < nz1))
                rows.append(n[ok])
                cols.append(n[ok] + di + nx1 * (dj + ny1 * dk))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    A = sp.csr_matrix((np.ones(r.size, dtype=np.int8), (r, c)),
                      shape=(grid.n_nodes, grid.n_nodes))
    A.sum_duplicates()
    A.sort_indices()
    return A


def csr_keys(A: sp.csr_matrix) -> np.ndarray:
    """Linearized (row * ncol + col) keys of a sorted CSR pattern."""
    row_of = np.repeat(np.arange(A.shape[0], dtype=np.int64), np.diff(A.indptr))
    return row_of * A.shape[1] + A.indices


def csr_slots(A: sp.csr_matrix, rows: np.ndarray, cols: np.ndarray,
              keys: np.ndarray | None = None) -> np.ndarray:
    """Positions of entries (rows, cols) inside ``A.data``; -1 where rows or cols < 0.

    Requires sorted indices and every valid pair to be in the pattern.
    """
    ncol = A.shape[1]
    if keys is None:
        keys = csr_keys(A)
    valid = (rows >= 0) & (cols >= 0)
    q = np.where(valid, rows.astype(np.int64) * ncol + cols, 0)
    pos = np.searchsorted(keys, q)
    pos = np.where(valid, pos, -1)
    hit = pos[valid]
    if hit.size and (hit.max() >= keys.size or np.any(keys[hit] != q[valid])):
        raise ValueError("entries outside the sparsity pattern")
    return pos


def elastic_stiffness(grid: StructuredGrid, dofs: DofMap, kern: ElementKernels,
                      lam: np.ndarray, mu: np.ndarray,
                      chunk: int = 4096) -> tuple[sp.csr_matrix, np.ndarray]:
    """Assemble the free-DoF elastic stiffness matrix.

    Returns:
        ``(K, grav_slots)`` where ``grav_slots`` (n_cells, 8, 24) maps the
        z-row entries of each element matrix to positions in ``K.data`` (the
        dummy position ``K.nnz`` for constrained entries).
    """
    adj = node_adjacency(grid)
    full = sp.kron(sp.csr_matrix(np.ones((3, 3), dtype=np.int8)), adj, format="csr")
    pat = full[dofs.free][:, dofs.free].tocsr()
    pat.sort_indices()
    K = sp.csr_matrix((np.zeros(pat.nnz), pat.indices.copy(), pat.indptr.copy()),
                      shape=pat.shape)
    nnz = K.nnz
    keys = csr_keys(K)
    data = np.zeros(nnz + 1)
    n_cells = grid.n_cells
    grav_slots = np.empty((n_cells, 8, 24), dtype=np.int64)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n_cells,))
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (n_cells,))
    for start in range(0, n_cells, chunk):
        sl = slice(start, min(start + chunk, n_cells))
        ef = dofs.edofs_free[sl]
        r = np.broadcast_to(ef[:, :, None], (ef.shape[0], 24, 24))
        c = np.broadcast_to(ef[:, None, :], (ef.shape[0], 24, 24))
        pos = csr_slots(K, r.ravel(), c.ravel(), keys).reshape(ef.shape[0], 24, 24)
        pos[pos < 0] = nnz
        vals = (lam[sl, None, None] * kern.K_lambda + mu[sl, None, None] * kern.K_mu)
        data += np.bincount(pos.ravel(), weights=vals.ravel(), minlength=nnz + 1)
        grav_slots[sl] = pos[:, 16:24, :]
    K.data[:] = data[:nnz]
    return K, grav_slots
