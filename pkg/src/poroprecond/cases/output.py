"""Field snapshots (legacy VTK) and per-step solver statistics (CSV)."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

STATS_COLUMNS = ("step", "t", "dt", "converged", "newton_iterations", "gmres_iterations",
                 "gmres_total", "backtracks", "setup_time", "solve_time", "cut", "shut_in")
SUMMARY_COLUMNS = ("accepted_steps", "cuts", "newton_per_step", "gmres_per_newton",
                   "setup_time_per_newton", "solve_time_per_newton")


class OutputError(OSError):
    pass


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {path}: {e.strerror}") from None


def nodal_displacement(model, u_free: np.ndarray) -> np.ndarray:
    """Full ``(n_nodes, 3)`` displacement relative to the geostatic state."""
    full = model.dofs.expand(u_free - model.u_geo)
    return full.reshape(3, -1).T


def write_vtk(path, grid, state, model, title: str = "poroprecond") -> None:
    """Write a legacy-VTK STRUCTURED_GRID with p, s (cells) and u, |u| (points).

    Raises:
        OutputError: if the file cannot be written.
    """
    path = Path(path)
    _ensure_dir(path.parent)
    nodes = grid.node_coords
    u = nodal_displacement(model, state.u)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} {grid.nz + 1}",
             f"POINTS {grid.n_nodes} double"]
    body = [("\n".join(" ".join(repr(float(v)) for v in row) for row in nodes))]
    cell = [f"CELL_DATA {grid.n_cells}"]
    for name, vals in (("pressure", state.p), ("saturation", state.s)):
        cell += [f"SCALARS {name} double 1", "LOOKUP_TABLE default",
                 "\n".join(repr(float(v)) for v in vals)]
    point = [f"POINT_DATA {grid.n_nodes}", "VECTORS displacement double",
             "\n".join(" ".join(repr(float(v)) for v in row) for row in u),
             "SCALARS displacement_magnitude double 1", "LOOKUP_TABLE default",
             "\n".join(repr(float(v)) for v in np.linalg.norm(u, axis=1))]
    try:
        path.write_text("\n".join(lines + body + cell + point) + "\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from None


def read_vtk_cell_scalars(path) -> dict[str, np.ndarray]:
    """Read back the cell scalars of a file written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out, i = {}, 0
    n_cells = None
    while i < len(tokens):
        t = tokens[i].split()
        if t and t[0] == "CELL_DATA":
            n_cells = int(t[1])
        elif t and t[0] == "POINT_DATA":
            n_cells = None
        elif t and t[0] == "SCALARS" and n_cells is not None:
            out[t[1]] = np.array([float(x) for x in tokens[i + 2:i + 2 + n_cells]])
            i += 1 + n_cells
        i += 1
    return out


def summarize(records) -> dict[str, float]:
    """Table-style averages over accepted steps.

    ``newton_per_step`` averages Newton iterations per accepted step and
    ``gmres_per_newton`` divides the accepted steps' GMRES total by their
    Newton total; times are per Newton iteration.
    """
    acc = [r for r in records if r.converged]
    n_newton = sum(r.newton_iterations for r in acc)
    gm = sum(sum(r.linear_iterations) for r in acc)
    return {
        "accepted_steps": len(acc),
        "cuts": sum(1 for r in records if r.cut),
        "newton_per_step": n_newton / len(acc) if acc else 0.0,
        "gmres_per_newton": gm / n_newton if n_newton else 0.0,
        "setup_time_per_newton": sum(r.setup_time for r in acc) / n_newton if n_newton else 0.0,
        "solve_time_per_newton": sum(r.solve_time for r in acc) / n_newton if n_newton else 0.0,
    }


def write_stats(path, records, meta: dict | None = None) -> dict[str, float]:
    """Write one row per attempted step plus a summary row.

    ``meta`` entries become ``# key: value`` header lines.

    Returns:
        The summary dictionary.

    Raises:
        OutputError: if the file cannot be written.
    """
    path = Path(path)
    _ensure_dir(path.parent)
    summary = summarize(records)
    try:
        with open(path, "w", newline="") as fh:
            for k, v in (meta or {}).items():
                fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh)
            w.writerow(STATS_COLUMNS)
            for r in records:
                w.writerow([r.step, repr(float(r.t)), repr(float(r.dt)), int(r.converged),
                            r.newton_iterations, ";".join(str(x) for x in r.linear_iterations),
                            sum(r.linear_iterations), r.backtracks, repr(float(r.setup_time)),
                            repr(float(r.solve_time)), int(r.cut), r.shut_in])
            w.writerow(["summary"] + [f"{k}={summary[k]!r}" for k in SUMMARY_COLUMNS])
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from None
    return summary


def read_stats(path) -> tuple[list[dict], dict[str, float]]:
    """Parse a stats CSV into per-step rows and the summary row."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows, summary = [], {}
    reader = csv.reader(lines)
    header = next(reader)
    for rec in reader:
        if rec and rec[0] == "summary":
            summary = {k: float(v) for k, v in (x.split("=", 1) for x in rec[1:])}
        elif rec:
            rows.append(dict(zip(header, rec)))
    return rows, summary


class OutputWriter:
    """Time-loop callback writing VTK snapshots every ``stride`` accepted steps."""

    def __init__(self, out_dir, model, stride: int = 1, vtk: bool = True, name: str = "case"):
        self.dir = Path(out_dir)
        self.model = model
        self.stride = max(1, int(stride))
        self.vtk = vtk
        self.name = name
        self.files: list[Path] = []
        _ensure_dir(self.dir)

    def snapshot(self, step, state):
        if self.vtk:
            path = self.dir / f"{self.name}_{step:05d}.vtk"
            write_vtk(path, self.model.grid, state, self.model, f"{self.name} t={state.t:g}")
            self.files.append(path)

    def __call__(self, step, state, record):
        if step % self.stride == 0:
            self.snapshot(step, state)
