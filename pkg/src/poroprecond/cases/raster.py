"""ASCII cell rasters.

A raster file holds whitespace-separated scalars, one per cell, in natural
order with x fastest, then y, then z (``c = i + nx*(j + ny*k)``). Line
breaks are irrelevant. A permeability raster may hold three consecutive
blocks (kx, ky, kz), which is the community layout of the SPE10 files.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage


class RasterError(ValueError):
    pass


def load_raster(path, nx: int, ny: int, nz: int, threshold: float = 0.0,
                source_shape=None, crop_offset=(0, 0, 0), components: int = 1) -> np.ndarray:
    """Read a raster and return its values on an ``nx x ny x nz`` box.

    Args:
        path: raster file.
        nx, ny, nz: target box.
        threshold: values below this are raised to it.
        source_shape: shape of the stored raster when cropping a sub-box;
            defaults to the target box.
        crop_offset: ``(i0, j0, k0)`` of the sub-box inside the source.
        components: 1 for scalars, 3 for stacked (kx, ky, kz) blocks.

    Returns:
        Array of shape ``(n,)`` or ``(n, components)`` in natural order.

    Raises:
        RasterError: on a count mismatch or an out-of-range crop.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise RasterError(f"cannot read raster {path}: {e}") from None
    # free-form: any whitespace layout, '#' starts a comment
    tokens = [t for ln in text.splitlines() for t in ln.split("#", 1)[0].split()]
    try:
        data = np.array(tokens, dtype=float)
    except ValueError as e:
        raise RasterError(f"raster {path}: non-numeric entry ({e})") from None
    sx, sy, sz = source_shape or (nx, ny, nz)
    ns = sx * sy * sz
    if data.size != ns * components:
        raise RasterError(f"raster {path}: expected {ns * components} values "
                          f"({components} x {sx}x{sy}x{sz}), found {data.size}")
    i0, j0, k0 = crop_offset
    if min(i0, j0, k0) < 0 or i0 + nx > sx or j0 + ny > sy or k0 + nz > sz:
        raise RasterError(f"crop {nx}x{ny}x{nz} at {tuple(crop_offset)} leaves the "
                          f"{sx}x{sy}x{sz} source")
    # natural order with x fastest is C order on (k, j, i)
    blocks = data.reshape(components, sz, sy, sx)[:, k0:k0 + nz, j0:j0 + ny, i0:i0 + nx]
    out = blocks.reshape(components, -1).T
    if threshold > 0:
        out = np.maximum(out, threshold)
    return out[:, 0].copy() if components == 1 else out.copy()


def write_raster(path, values, per_line: int = 6) -> None:
    """Write values (natural order; ``(n, 3)`` arrays as stacked blocks)."""
    v = np.asarray(values, dtype=float)
    flat = v.T.ravel() if v.ndim == 2 else v.ravel()
    pad = (-flat.size) % per_line
    rows = np.concatenate([flat, np.full(pad, np.nan)]).reshape(-1, per_line)
    with open(path, "w") as fh:
        for r in rows:
            fh.write(" ".join(repr(float(x)) for x in r if not np.isnan(x)) + "\n")


def write_int_raster(path, values, per_line: int = 20) -> None:
    v = np.asarray(values, dtype=np.int64).ravel()
    with open(path, "w") as fh:
        for s in range(0, v.size, per_line):
            fh.write(" ".join(str(x) for x in v[s:s + per_line]) + "\n")


def lognormal_field(nx: int, ny: int, nz: int, mean_log: float = 0.0, sigma_log: float = 1.0,
                    correlation: float = 2.0, seed: int | None = 0) -> np.ndarray:
    """Correlated lognormal field in natural order.

    White noise is smoothed with a Gaussian filter of ``correlation`` cells,
    renormalized to unit variance, then mapped through ``exp(mean + sigma z)``.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((nz, ny, nx))
    if correlation > 0:
        z = ndimage.gaussian_filter(z, correlation, mode="wrap")
    sd = z.std()
    z = (z - z.mean()) / (sd if sd > 0 else 1.0)
    return np.exp(mean_log + sigma_log * z).ravel()


def block_index(nx: int, ny: int, nz: int) -> np.ndarray:
    """``(n, 3)`` array of ``(i, j, k)`` per cell in natural order."""
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    return np.column_stack([i.ravel(), j.ravel(), k.ravel()])


def read_regions(path, nx: int, ny: int, nz: int, **kw) -> np.ndarray:
    vals = load_raster(path, nx, ny, nz, **kw)
    ids = np.rint(vals).astype(np.int64)
    if np.any(np.abs(vals - ids) > 1e-9):
        raise RasterError(f"region raster {path} holds non-integer ids")
    return ids


__all__ = ["RasterError", "load_raster", "write_raster", "write_int_raster",
           "lognormal_field", "block_index", "read_regions"]
