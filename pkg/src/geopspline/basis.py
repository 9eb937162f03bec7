"""Sparse B-spline basis on the geodesic grid.

Each location activates the three knots of the icomesh triangle it falls
in. The raw entries are the per-vertex Bernstein sums

    d=1:  b
    d=2:  b**2 + b
    d=3:  b**3 + b**2 + b

of the barycentric coordinate ``b`` of that vertex. These do not sum to
one for d > 1, so rows are normalised by default (``normalize_rows``),
which restores the partition of unity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import GeodesicGrid, latlon_to_xyz


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class BasisConfig:
    degree: int = 3
    normalize_rows: bool = True
    grid_level: int = 5

    def __post_init__(self):
        if self.degree not in (1, 2, 3):
            raise BasisError(f"degree must be 1, 2 or 3, got {self.degree}")
        if self.grid_level < 0:
            raise BasisError(f"grid level must be >= 0, got {self.grid_level}")


def barycentric(v, v1, v2, v3) -> tuple[float, float, float]:
    """Barycentric coordinates of the 2-d point ``v`` in triangle ``v1 v2 v3``."""
    v, v1, v2, v3 = (np.asarray(x, dtype=float) for x in (v, v1, v2, v3))
    e1, e2, d = v2 - v1, v3 - v1, v - v1
    det = e1[0] * e2[1] - e1[1] * e2[0]
    if abs(det) / 2 <= 1e-14:
        raise BasisError(f"degenerate triangle (area {abs(det) / 2:g})")
    b2 = (d[0] * e2[1] - d[1] * e2[0]) / det
    b3 = (e1[0] * d[1] - e1[1] * d[0]) / det
    return (1.0 - b2 - b3, b2, b3)


def bernstein_entries(bary, degree: int) -> np.ndarray:
    """Raw (un-normalised) non-zero basis entries for barycentric coords.

    Works on a single triple or an ``(n, 3)`` array.
    """
    b = np.asarray(bary, dtype=float)
    if degree == 1:
        return b.copy()
    if degree == 2:
        return b * b + b
    if degree == 3:
        return b * b * b + b * b + b
    raise BasisError(f"degree must be 1, 2 or 3, got {degree}")


def _check_grid(grid: GeodesicGrid, cfg: BasisConfig):
    if grid.nu != cfg.grid_level:
        raise BasisError(f"grid has level {grid.nu} but config expects {cfg.grid_level}")


def basis_from_points(points, grid: GeodesicGrid, cfg: BasisConfig) -> sp.csr_matrix:
    """Basis matrix for unit vectors ``(n, 3)``.

    Every row stores exactly three entries (explicit zeros are kept, so
    ``nnz == 3 n``), with column indices increasing within a row.
    """
    _check_grid(grid, cfg)
    loc = grid.locate_many(points)
    n = len(loc)
    vals = bernstein_entries(loc.barycentric, cfg.degree)
    if cfg.normalize_rows and n:
        vals = vals / vals.sum(axis=1, keepdims=True)
    cols = loc.vertex_ids
    order = np.argsort(cols, axis=1)
    cols = np.take_along_axis(cols, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    indptr = np.arange(0, 3 * n + 1, 3)
    return sp.csr_matrix(
        (vals.ravel(), cols.ravel().astype(np.int32), indptr), shape=(n, grid.n_knots)
    )


def basis_row(point, grid: GeodesicGrid, cfg: BasisConfig) -> sp.csr_matrix:
    return basis_from_points(np.asarray(point, dtype=float)[None, :], grid, cfg)


def check_latlon(lat, lon) -> tuple[np.ndarray, np.ndarray]:
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    if lat.shape != lon.shape:
        raise BasisError("latitude and longitude arrays differ in length")
    bad = np.flatnonzero(~((lat >= -90) & (lat <= 90)))
    if len(bad):
        raise BasisError(f"row {int(bad[0])}: latitude {lat[bad[0]]!r} outside [-90, 90]")
    bad = np.flatnonzero(~((lon >= -180) & (lon <= 180)))
    if len(bad):
        raise BasisError(f"row {int(bad[0])}: longitude {lon[bad[0]]!r} outside [-180, 180]")
    return lat, lon


def assemble_basis(lat, lon, grid: GeodesicGrid, cfg: BasisConfig) -> sp.csr_matrix:
    """``n x K`` basis matrix for locations given in degrees."""
    lat, lon = check_latlon(lat, lon)
    return basis_from_points(latlon_to_xyz(lat, lon).reshape(-1, 3), grid, cfg)


def write_sparse_text(B: sp.spmatrix, path) -> None:
    """Write ``rows cols nnz`` then one ``row col value`` line per entry."""
    B = sp.coo_matrix(B)
    with open(path, "w") as fh:
        fh.write(f"{B.shape[0]} {B.shape[1]} {B.nnz}\n")
        for r, c, v in zip(B.row.tolist(), B.col.tolist(), B.data.tolist()):
            fh.write(f"{r} {c} {v!r}\n")


def read_sparse_text(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise BasisError(f"{path}: bad header {header!r}")
        rows, cols, nnz = (int(x) for x in header)
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if len(data) != nnz:
        raise BasisError(f"{path}: header declares {nnz} entries, found {len(data)}")
    B = sp.coo_matrix(
        (data[:, 2], (data[:, 0].astype(np.int64), data[:, 1].astype(np.int64))),
        shape=(rows, cols),
    )
    return B.tocsr()
