"""Matplotlib figures: solver iteration history and field slices."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_iteration_history(records, path=None, title: str | None = None):
    """Newton iterations per step and GMRES iterations per Newton iteration.

    Failed attempts are drawn as red crosses on the Newton panel.
    """
    acc = [r for r in records if r.converged]
    fail = [r for r in records if not r.converged]
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    t = [r.t for r in acc]
    ax0.step(t, [r.newton_iterations for r in acc], where="post", color="k")
    if fail:
        ax0.plot([r.t for r in fail], [r.newton_iterations for r in fail], "rx")
    ax0.set_ylabel("Newton / step")
    for r in acc:
        if r.linear_iterations:
            ax1.plot([r.t] * len(r.linear_iterations), r.linear_iterations, ".", color="C0",
                     ms=3)
    means = [np.mean(r.linear_iterations) if r.linear_iterations else np.nan for r in acc]
    ax1.plot(t, means, color="C1", lw=1, label="step mean")
    ax1.set_ylabel("GMRES / Newton")
    ax1.set_xlabel("time [day]")
    ax1.legend(loc="upper right", frameon=False)
    if title:
        ax0.set_title(title)
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return fig


def plot_field_slice(grid, values, axis: str = "z", index: int | None = None, path=None,
                     label: str = "", cmap: str = "viridis"):
    """Color map of a cell field on one grid plane.

    Args:
        axis: normal of the plane (``"x"``, ``"y"`` or ``"z"``).
        index: plane index along that axis (default: middle).
    """
    cube = np.asarray(values, dtype=float).reshape(grid.nz, grid.ny, grid.nx)
    ax_id = "xyz".index(axis)
    n = (grid.nx, grid.ny, grid.nz)[ax_id]
    k = n // 2 if index is None else int(index)
    if not 0 <= k < n:
        raise ValueError(f"slice index {k} outside 0..{n - 1}")
    ext = grid.extent
    o = grid.origin
    if axis == "z":
        plane, xl, yl, box = cube[k], "x", "y", (o[0], o[0] + ext[0], o[1], o[1] + ext[1])
    elif axis == "y":
        plane, xl, yl, box = cube[:, k, :], "x", "z", (o[0], o[0] + ext[0], o[2], o[2] + ext[2])
    else:
        plane, xl, yl, box = cube[:, :, k], "y", "z", (o[1], o[1] + ext[1], o[2], o[2] + ext[2])
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(plane, origin="lower", extent=box, cmap=cmap, aspect="auto")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel(f"{xl} [m]")
    ax.set_ylabel(f"{yl} [m]")
    ax.set_title(f"{label} at {axis}-index {k}")
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return fig
