"""Scalar algebraic multigrid used for the elasticity components and the
CPR pressure system.

Coarsening and interpolation come from pyamg: classical Ruge-Stueben
(``method="classical"``, used for pressure) or smoothed aggregation
(``method="aggregation"``, used for the elasticity components, where classical
interpolation lost refinement independence on trilinear stiffness matrices).
The cycle itself is implemented here: one V-cycle with a forward
Gauss-Seidel sweep on the way down, a backward sweep on the way up and a
sparse direct solve on the coarsest level. With one process the hybrid
l1-Gauss-Seidel smoother reduces to ordinary Gauss-Seidel, so that is what
runs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from pyamg.relaxation.relaxation import gauss_seidel

log = logging.getLogger(__name__)


@dataclass
class AMGParams:
    method: str = "classical"
    strength: float = 0.25
    max_coarse: int = 64
    max_levels: int = 25
    presweeps: int = 1
    postsweeps: int = 1


@dataclass
class _Level:
    A: sp.csr_matrix
    P: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None


class AMGHierarchy:
    """Multigrid hierarchy whose ``apply`` performs one V-cycle from x = 0.

    Args:
        A: square sparse matrix with a nonzero diagonal.
        params: coarsening and smoothing options.

    Raises:
        ValueError: for non-square input or zero diagonal entries.
    """

    def __init__(self, A, params: AMGParams | None = None):
        self.params = params or AMGParams()
        A = sp.csr_matrix(A, dtype=float)
        A.sort_indices()
        if A.shape[0] != A.shape[1]:
            raise ValueError("AMG needs a square matrix")
        if np.any(A.diagonal() == 0):
            raise ValueError("AMG needs a nonzero diagonal")
        self.levels: list[_Level] = []
        self._build(A)

    def _pyamg(self, A):
        p = self.params
        if p.method == "classical":
            return pyamg.ruge_stuben_solver(
                A, strength=("classical", {"theta": p.strength}),
                max_coarse=p.max_coarse, max_levels=p.max_levels, keep=False)
        if p.method == "aggregation":
            return pyamg.smoothed_aggregation_solver(
                A, max_coarse=p.max_coarse, max_levels=p.max_levels, keep=False)
        raise ValueError(f"unknown AMG method '{p.method}'")

    def _build(self, A):
        p = self.params
        n = A.shape[0]
        offdiag = A.nnz - np.count_nonzero(A.diagonal())
        if n <= p.max_coarse or offdiag == 0:
            self.levels = [_Level(A)]
        else:
            # pyamg estimates spectral radii from np.random start vectors; pin them so
            # repeated setups are bitwise identical, and leave the caller's stream alone
            rng_state = np.random.get_state()
            np.random.seed(0)
            try:
                ml = self._pyamg(A)
            finally:
                np.random.set_state(rng_state)
            for lv in ml.levels:
                Al = sp.csr_matrix(lv.A)
                Al.sort_indices()
                P = getattr(lv, "P", None)
                R = getattr(lv, "R", None)
                self.levels.append(_Level(Al, None if P is None else sp.csr_matrix(P),
                                          None if R is None else sp.csr_matrix(R)))
            # stop at the first level that failed to coarsen
            for i in range(len(self.levels) - 1):
                if self.levels[i + 1].A.shape[0] >= self.levels[i].A.shape[0]:
                    log.warning("AMG coarsening stagnated at level %d; direct solve there", i)
                    self.levels = self.levels[:i + 1]
                    break
            self.levels[-1].P = self.levels[-1].R = None
        coarse = self.levels[-1].A
        if coarse.shape[0] == 1:
            self._coarse = lambda b: b / coarse[0, 0]
        else:
            lu = spla.splu(sp.csc_matrix(coarse))
            self._coarse = lu.solve

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def operator_complexity(self) -> float:
        return sum(lv.A.nnz for lv in self.levels) / self.levels[0].A.nnz

    def grid_complexity(self) -> float:
        return sum(lv.A.shape[0] for lv in self.levels) / self.levels[0].A.shape[0]

    def apply(self, b: np.ndarray) -> np.ndarray:
        b = np.ascontiguousarray(b, dtype=float)
        return self._cycle(0, b)

    __call__ = apply

    def _cycle(self, i: int, b: np.ndarray) -> np.ndarray:
        lv = self.levels[i]
        if i == len(self.levels) - 1:
            return self._coarse(b)
        x = np.zeros_like(b)
        gauss_seidel(lv.A, x, b, iterations=self.params.presweeps, sweep="forward")
        r = b - lv.A @ x
        x += lv.P @ self._cycle(i + 1, np.ascontiguousarray(lv.R @ r))
        gauss_seidel(lv.A, x, b, iterations=self.params.postsweeps, sweep="backward")
        return x


def amg_setup(matrix, params: AMGParams | None = None) -> AMGHierarchy:
    return AMGHierarchy(matrix, params)
