"""IGMRF structure matrices and their scaling.

Three first-order structures are available: the ICAR on the geodesic grid,
and two lat-lon lattice structures (a plain 2-d lattice and one that is
circular in longitude) used to compare how evenly each spreads prior
variance over the globe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .gmrf import FactorizationError, SymbolicFactor
from .grid import GeodesicGrid, xyz_to_latlon

KINDS = ("geodesic-icar", "planar-naive", "circular-lon")

#: Largest dimension handled by the dense eigendecomposition path.
DENSE_LIMIT = 3000


class RankError(np.linalg.LinAlgError):
    """Structure matrix does not have the expected rank K - 1."""


@dataclass(frozen=True)
class StructureMatrix:
    R: sp.csr_matrix
    kind: str
    scaled: bool = False
    kappa: float = 1.0
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.R.shape[0]


def _graph_laplacian(rows, cols, K) -> sp.csr_matrix:
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(K, K))
    A.sum_duplicates()
    A.data[:] = 1.0
    deg = np.asarray(A.sum(axis=1)).ravel()
    R = (sp.diags(deg) - A).tocsr()
    R.sort_indices()
    return R


def icar_structure(grid: GeodesicGrid) -> StructureMatrix:
    """ICAR structure on the grid: degree on the diagonal, -1 for neighbours."""
    indptr, indices = grid.adjacency_csr
    rows = np.repeat(np.arange(grid.n_knots), np.diff(indptr))
    R = _graph_laplacian(rows, indices, grid.n_knots)
    lat, lon = xyz_to_latlon(grid.knots)
    return StructureMatrix(R, "geodesic-icar", lat=lat, lon=lon)


def random_walk_structure(n: int, circular: bool = False) -> sp.csr_matrix:
    """First-order random walk structure on a path (or cycle) of ``n`` nodes."""
    i = np.arange(n - 1)
    rows, cols = np.concatenate([i, i + 1]), np.concatenate([i + 1, i])
    if circular:
        rows = np.concatenate([rows, [0, n - 1]])
        cols = np.concatenate([cols, [n - 1, 0]])
    return _graph_laplacian(rows, cols, n)


def planar_structure(L: int, Q: int, circular_longitude: bool = False) -> StructureMatrix:
    """Kronecker-sum lattice structure on ``L`` latitudes by ``Q`` longitudes.

    Knot ``l * Q + q`` sits at the centre of lattice cell ``(l, q)``.
    """
    if L < 3 or Q < 3:
        raise ValueError(f"lattice dimensions must be >= 3, got L={L}, Q={Q}")
    R_lat = random_walk_structure(L)
    R_lon = random_walk_structure(Q, circular=circular_longitude)
    R = (sp.kron(sp.identity(L), R_lon) + sp.kron(R_lat, sp.identity(Q))).tocsr()
    R.sort_indices()
    lat = np.repeat(90.0 - 180.0 * (np.arange(L) + 0.5) / L, Q)
    lon = np.tile(-180.0 + 360.0 * (np.arange(Q) + 0.5) / Q, L)
    kind = "circular-lon" if circular_longitude else "planar-naive"
    return StructureMatrix(R, kind, lat=lat, lon=lon)


def generalized_inverse(R, null_tol: float = 1e-10) -> np.ndarray:
    """Dense pseudo-inverse of a rank ``K-1`` structure with constant null space."""
    dense = R.R.toarray() if isinstance(R, StructureMatrix) else np.asarray(
        R.toarray() if sp.issparse(R) else R, dtype=float
    )
    w, V = np.linalg.eigh(dense)
    null = w <= null_tol * max(w.max(), 1.0)
    if null.sum() != 1:
        raise RankError(f"expected exactly one null eigenvalue, found {int(null.sum())}")
    v0 = V[:, null].ravel()
    if np.ptp(v0 * np.sign(v0.sum())) > 1e-6:
        raise RankError("null space of the structure matrix is not the constant vector")
    Vp, wp = V[:, ~null], w[~null]
    return (Vp / wp) @ Vp.T


def marginal_variance_diag(R: StructureMatrix | sp.spmatrix, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Diagonal of the generalised inverse (sum-to-zero identification).

    Small problems use a dense eigendecomposition. Larger ones factor the
    leading ``(K-1) x (K-1)`` block (fixing the last coefficient), then
    project that g-inverse onto the sum-to-zero space:
    ``diag(P S P)_i = S_ii - 2 (S 1)_i / K + 1'S1 / K^2``.
    """
    M = R.R if isinstance(R, StructureMatrix) else sp.csr_matrix(R)
    K = M.shape[0]
    if K <= dense_limit:
        d = np.diag(generalized_inverse(M))
    else:
        R0 = sp.csc_matrix(M[: K - 1, : K - 1])
        try:
            factor = SymbolicFactor(R0).factorize(R0)
        except FactorizationError as exc:
            raise RankError(f"structure has rank below K-1: {exc}") from exc
        s_diag = np.append(factor.inverse_diagonal(), 0.0)
        s_one = np.append(factor.solve(np.ones(K - 1)), 0.0)
        d = s_diag - 2.0 * s_one / K + s_one.sum() / K**2
    if not np.all(d > 0):
        raise RankError("generalised inverse has a non-positive diagonal entry")
    return d


def scale_structure(R: StructureMatrix, dense_limit: int = DENSE_LIMIT) -> StructureMatrix:
    """Rescale so the geometric mean of the marginal variances is one."""
    d = marginal_variance_diag(R, dense_limit)
    kappa = float(np.exp(np.mean(np.log(d))))
    return replace(R, R=(R.R * kappa).tocsr(), scaled=True, kappa=R.kappa * kappa)


def coefficient_of_variation(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std() / x.mean())


def comparable_lattice(K: int) -> tuple[int, int]:
    """Lat-lon lattice ``L x 2L`` whose size is closest to ``K``."""
    L = max(3, int(round(np.sqrt(K / 2.0))))
    return L, 2 * L
