"""Structured hexahedral mesh, TPFA geometry, transmissibility and well index.

Cells are indexed ``c = i + nx*(j + ny*k)`` and nodes
``n = i + (nx+1)*(j + (ny+1)*k)``. The z axis points up, so ``k = 0`` is the
bottom layer. Interior faces always satisfy ``K < L`` with the unit normal
along the positive coordinate axis, i.e. from K toward L.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

SIDES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


@dataclass(frozen=True)
class Face:
    """A single grid face.

    Attributes:
        cells: ``(K, L)`` for interior faces, ``(K, -1)`` on the boundary.
        area: face area [m^2].
        normal: unit normal; from K to L, or outward on the boundary.
        center: collocation point x_f [m].
        side: boundary side name, ``None`` for interior faces.
    """

    cells: tuple[int, int]
    area: float
    normal: tuple[float, float, float]
    center: tuple[float, float, float]
    side: str | None = None

    @property
    def is_boundary(self) -> bool:
        return self.cells[1] < 0


@dataclass(frozen=True, eq=False)
class StructuredGrid:
    """Uniform axis-aligned hexahedral grid.

    Use :func:`build_grid` to construct one. All array attributes are
    read-only views computed once.
    """

    nx: int
    ny: int
    nz: int
    extent: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # Mechanics tag per boundary side: "roller", "free" or "fixed".
    mech_bc: dict = field(default_factory=lambda: {
        "xmin": "roller", "xmax": "roller", "ymin": "roller",
        "ymax": "roller", "zmin": "roller", "zmax": "free"})

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1) * (self.nz + 1)

    @property
    def cell_dims(self) -> np.ndarray:
        return np.array([self.extent[0] / self.nx, self.extent[1] / self.ny,
                         self.extent[2] / self.nz])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_dims))

    def cell_index(self, i, j, k):
        return i + self.nx * (j + self.ny * k)

    def node_index(self, i, j, k):
        return i + (self.nx + 1) * (j + (self.ny + 1) * k)

    @cached_property
    def cell_ijk(self) -> np.ndarray:
        c = np.arange(self.n_cells)
        return np.stack([c % self.nx, (c // self.nx) % self.ny,
                         c // (self.nx * self.ny)], axis=1)

    @cached_property
    def cell_centroids(self) -> np.ndarray:
        h = self.cell_dims
        return np.asarray(self.origin) + (self.cell_ijk + 0.5) * h

    @cached_property
    def node_coords(self) -> np.ndarray:
        n = np.arange(self.n_nodes)
        nx1, ny1 = self.nx + 1, self.ny + 1
        ijk = np.stack([n % nx1, (n // nx1) % ny1, n // (nx1 * ny1)], axis=1)
        return np.asarray(self.origin) + ijk * self.cell_dims

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 8) node ids; local node ``a + 2b + 4c`` sits at offset (a, b, c)."""
        ijk = self.cell_ijk
        out = np.empty((self.n_cells, 8), dtype=np.int64)
        for loc in range(8):
            a, b, c = loc & 1, (loc >> 1) & 1, (loc >> 2) & 1
            out[:, loc] = self.node_index(ijk[:, 0] + a, ijk[:, 1] + b, ijk[:, 2] + c)
        return out

    # -- faces ---------------------------------------------------------------
    @cached_property
    def _interior(self):
        nx, ny, nz = self.shape
        idx = np.arange(self.n_cells).reshape(nz, ny, nx)
        h = self.cell_dims
        areas = (h[1] * h[2], h[0] * h[2], h[0] * h[1])
        K, L, axis, area = [], [], [], []
        for ax, sl in ((0, (slice(None), slice(None), slice(None, -1))),
                       (1, (slice(None), slice(None, -1), slice(None))),
                       (2, (slice(None, -1), slice(None), slice(None)))):
            k = idx[sl].ravel()
            step = (1, nx, nx * ny)[ax]
            K.append(k)
            L.append(k + step)
            axis.append(np.full(k.size, ax))
            area.append(np.full(k.size, areas[ax]))
        K = np.concatenate(K)
        L = np.concatenate(L)
        return K, L, np.concatenate(axis), np.concatenate(area)

    @property
    def face_cells(self) -> np.ndarray:
        K, L, _, _ = self._interior
        return np.stack([K, L], axis=1)

    @property
    def face_axis(self) -> np.ndarray:
        return self._interior[2]

    @property
    def face_area(self) -> np.ndarray:
        return self._interior[3]

    @property
    def n_interior_faces(self) -> int:
        return self._interior[0].size

    @cached_property
    def face_centers(self) -> np.ndarray:
        K, L, _, _ = self._interior
        x = self.cell_centroids
        return 0.5 * (x[K] + x[L])

    @cached_property
    def _boundary(self):
        nx, ny, nz = self.shape
        ijk = self.cell_ijk
        h = self.cell_dims
        areas = (h[1] * h[2], h[0] * h[2], h[0] * h[1])
        lim = (nx - 1, ny - 1, nz - 1)
        cells, sides = [], []
        for s, name in enumerate(SIDES):
            ax, hi = s // 2, s % 2
            sel = np.nonzero(ijk[:, ax] == (lim[ax] if hi else 0))[0]
            cells.append(sel)
            sides.append(np.full(sel.size, s))
        cells = np.concatenate(cells)
        sides = np.concatenate(sides)
        axis = sides // 2
        sign = np.where(sides % 2 == 1, 1.0, -1.0)
        normal = np.zeros((cells.size, 3))
        normal[np.arange(cells.size), axis] = sign
        center = self.cell_centroids[cells].copy()
        center[np.arange(cells.size), axis] += sign * 0.5 * h[axis]
        area = np.array(areas)[axis]
        return cells, sides, normal, center, area

    @property
    def bface_cell(self) -> np.ndarray:
        return self._boundary[0]

    @property
    def bface_side(self) -> np.ndarray:
        return self._boundary[1]

    @property
    def bface_normal(self) -> np.ndarray:
        return self._boundary[2]

    @property
    def bface_center(self) -> np.ndarray:
        return self._boundary[3]

    @property
    def bface_area(self) -> np.ndarray:
        return self._boundary[4]

    @cached_property
    def faces(self) -> list[Face]:
        """All faces as objects (interior first, then boundary by side)."""
        out = []
        K, L, axis, area = self._interior
        xc = self.face_centers
        for f in range(K.size):
            n = [0.0, 0.0, 0.0]
            n[axis[f]] = 1.0
            out.append(Face((int(K[f]), int(L[f])), float(area[f]), tuple(n),
                            tuple(xc[f])))
        cells, sides, normal, center, barea = self._boundary
        for f in range(cells.size):
            out.append(Face((int(cells[f]), -1), float(barea[f]),
                            tuple(normal[f]), tuple(center[f]), SIDES[sides[f]]))
        return out

    # -- TPFA ----------------------------------------------------------------
    def transmissibilities(self, perm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interior face transmissibilities and boundary half-transmissibilities.

        Args:
            perm: (n_cells, 3) principal permeabilities, any consistent unit.

        Returns:
            ``(T_interior, T_boundary)`` in perm units times meters.
        """
        perm = np.asarray(perm, dtype=float)
        K, L, axis, area = self._interior
        x = self.cell_centroids
        xf = self.face_centers
        nrm = np.zeros((K.size, 3))
        nrm[np.arange(K.size), axis] = 1.0
        tK = half_transmissibility(area, xf, x[K], perm[K], nrm)
        # The L-side half uses the normal pointing out of L.
        tL = half_transmissibility(area, xf, x[L], perm[L], -nrm)
        cells, _, normal, center, barea = self._boundary
        tb = half_transmissibility(barea, center, x[cells], perm[cells], normal)
        return transmissibility(tK, tL), tb

    def column(self, i: int, j: int, k0: int = 0, k1: int | None = None) -> np.ndarray:
        """Cell ids of the vertical column (i, j), layers k0..k1-1."""
        k1 = self.nz if k1 is None else k1
        return self.cell_index(i, j, np.arange(k0, k1))


def build_grid(nx: int, ny: int, nz: int,
               domain_extent: Sequence[float] = (1.0, 1.0, 1.0),
               origin: Sequence[float] = (0.0, 0.0, 0.0),
               mech_bc: dict | None = None) -> StructuredGrid:
    """Build a uniform structured grid.

    Raises:
        ValueError: on non-positive counts or extents.
    """
    counts = (nx, ny, nz)
    if any(int(c) != c or c < 1 for c in counts):
        raise ValueError(f"cell counts must be positive integers, got {counts}")
    ext = tuple(float(e) for e in domain_extent)
    if len(ext) != 3 or any(not e > 0 for e in ext):
        raise ValueError(f"domain extents must be positive, got {domain_extent}")
    kw = {}
    if mech_bc is not None:
        bad = set(mech_bc) - set(SIDES)
        if bad:
            raise ValueError(f"unknown boundary sides {sorted(bad)}")
        tags = {"xmin": "roller", "xmax": "roller", "ymin": "roller",
                "ymax": "roller", "zmin": "roller", "zmax": "free"}
        tags.update(mech_bc)
        for s, t in tags.items():
            if t not in ("roller", "free", "fixed"):
                raise ValueError(f"bad mechanics tag '{t}' on {s}")
        kw["mech_bc"] = tags
    return StructuredGrid(int(nx), int(ny), int(nz), ext,
                          tuple(float(o) for o in origin), **kw)


def half_transmissibility(area, x_f, x_K, perm, normal):
    """Half transmissibility |f| (x_f - x_K).kappa.n / |x_f - x_K|^2.

    Vectorized over leading axes. ``perm`` holds the principal values of a
    diagonal tensor.

    Raises:
        ValueError: for a zero-area face or coincident x_f and x_K.
    """
    area = np.asarray(area, dtype=float)
    d = np.asarray(x_f, dtype=float) - np.asarray(x_K, dtype=float)
    if np.any(area <= 0):
        raise ValueError("degenerate face with non-positive area")
    dd = np.sum(d * d, axis=-1)
    if np.any(dd == 0):
        raise ValueError("collocation point coincides with the cell centroid")
    return area * np.sum(d * np.asarray(perm, dtype=float) * np.asarray(normal), axis=-1) / dd


def transmissibility(t_K, t_L):
    """Harmonic combination of two half transmissibilities; 0 when sealed."""
    t_K = np.asarray(t_K, dtype=float)
    t_L = np.asarray(t_L, dtype=float)
    den = t_K + t_L
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, t_K * t_L / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)


def peaceman_radius(cell_dims, perm_principal) -> float:
    hx, hy = cell_dims[0], cell_dims[1]
    kx, ky = perm_principal[0], perm_principal[1]
    ryx = math.sqrt(ky / kx)
    return 0.28 * math.sqrt(ryx * hx**2 + hy**2 / ryx) / (ryx**0.5 + ryx**-0.5)


def well_index(cell_dims, perm_principal, r_w: float, s_k: float = 0.0,
               cell: int | None = None) -> float:
    """Peaceman well index 2 pi h_z sqrt(kx ky) / (log(r/r_w) + s_k).

    Raises:
        ValueError: if the log term plus skin is not positive.
    """
    if r_w <= 0:
        raise ValueError("well radius must be positive")
    kx, ky = float(perm_principal[0]), float(perm_principal[1])
    if kx <= 0 or ky <= 0:
        return 0.0
    if math.isinf(s_k):
        return 0.0
    r = peaceman_radius(cell_dims, perm_principal)
    den = math.log(r / r_w) + s_k
    if den <= 0:
        where = f" in cell {cell}" if cell is not None else ""
        raise ValueError(f"non-positive well-index denominator{where}: "
                         f"equivalent radius {r:.4g} m vs r_w {r_w:.4g} m, skin {s_k}")
    return 2.0 * math.pi * cell_dims[2] * math.sqrt(kx * ky) / den


@dataclass
class WellSpec:
    """A vertical bottomhole-pressure-controlled well.

    Attributes:
        name: label used in diagnostics.
        cells: perforated cells, a contiguous vertical column.
        role: ``"injector"`` or ``"producer"``.
        delta_bhp: target BHP offset from initial formation pressure at the
            reference elevation [internal pressure].
        ramp_time: linear buildup period for ``delta_bhp`` [internal time].
        r_w: wellbore radius [m].
        skin: skin factor.
        inject_phase: ``"wetting"`` or ``"both"`` (injectors only).
        z_bh: reference elevation; defaults to the topmost perforation centroid.
    """

    name: str
    cells: np.ndarray
    role: str
    delta_bhp: float
    ramp_time: float = 1.0
    r_w: float = 0.1524
    skin: float = 0.0
    inject_phase: str = "wetting"
    z_bh: float | None = None

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64).ravel()
        if self.role not in ("injector", "producer"):
            raise ValueError(f"well {self.name}: role must be injector or producer")
        if self.inject_phase not in ("wetting", "both"):
            raise ValueError(f"well {self.name}: inject_phase must be wetting or both")
        if self.r_w <= 0:
            raise ValueError(f"well {self.name}: r_w must be positive")
        if self.cells.size == 0:
            raise ValueError(f"well {self.name}: no perforated cells")

    def validate(self, grid: StructuredGrid) -> None:
        """Check the perforations form a contiguous vertical column."""
        if self.cells.min() < 0 or self.cells.max() >= grid.n_cells:
            raise ValueError(f"well {self.name}: cell index out of range")
        ijk = grid.cell_ijk[self.cells]
        if np.unique(ijk[:, 0]).size != 1 or np.unique(ijk[:, 1]).size != 1:
            raise ValueError(f"well {self.name}: perforations are not one vertical column")
        ks = np.sort(ijk[:, 2])
        if np.any(np.diff(ks) != 1):
            raise ValueError(f"well {self.name}: perforations are not contiguous")

    def reference_elevation(self, grid: StructuredGrid) -> float:
        if self.z_bh is not None:
            return float(self.z_bh)
        return float(grid.cell_centroids[self.cells, 2].max())
