"""Geodesic discrete global grid built on a recursively split icosahedron.

The grid keeps two views of the same vertex set: the *icomesh*, whose
vertices lie on the flat faces of the icosahedron, and the *icosphere*,
obtained by pushing every icomesh vertex radially onto the unit sphere.
Faces are stored in hierarchical order, so the children of face ``f`` at
one level are faces ``4f .. 4f+3`` at the next; this makes point location
a simple per-level descent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)

#: Vertex budget used by :func:`subdivide` unless told otherwise (level 7).
DEFAULT_VERTEX_BUDGET = 10 * 4**7 + 2

EARTH_RADIUS_KM = 6371.0


class GridError(ValueError):
    """Raised for invalid grid inputs (bad levels, non-unit points...)."""


def vertex_count(level: int) -> int:
    return 10 * 4**level + 2


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle mesh with a subdivision level.

    ``vertices`` is ``(V, 3)``; ``faces`` is ``(F, 3)`` with outward
    (counter-clockwise seen from outside) winding.
    """

    vertices: np.ndarray
    faces: np.ndarray
    level: int = 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted ``(E, 2)`` index pairs."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces


def _orient_outward(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    faces = faces.copy()
    a, b, c = (vertices[faces[:, i]] for i in range(3))
    inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return faces


def build_icosahedron() -> TriangleMesh:
    """Regular icosahedron inscribed in the unit sphere.

    Vertex 0 sits exactly at the north pole ``(0, 0, 1)`` and vertex 1 (a
    neighbour of the pole) has longitude 0, i.e. lies in the x-z plane.
    """
    lat = np.arctan(0.5)
    upper = np.deg2rad(72.0 * np.arange(5))
    lower = np.deg2rad(36.0 + 72.0 * np.arange(5))
    verts = np.zeros((12, 3))
    verts[0] = (0.0, 0.0, 1.0)
    verts[1:6] = np.column_stack(
        [np.cos(lat) * np.cos(upper), np.cos(lat) * np.sin(upper), np.full(5, np.sin(lat))]
    )
    verts[6:11] = np.column_stack(
        [np.cos(lat) * np.cos(lower), np.cos(lat) * np.sin(lower), np.full(5, -np.sin(lat))]
    )
    verts[11] = (0.0, 0.0, -1.0)

    faces = []
    for i in range(5):
        faces.append((0, 1 + i, 1 + (i + 1) % 5))
    for i in range(5):
        u, un = 1 + i, 1 + (i + 1) % 5
        d, dn = 6 + i, 6 + (i + 1) % 5
        faces.append((u, d, un))
        faces.append((un, d, dn))
    for i in range(5):
        faces.append((11, 6 + (i + 1) % 5, 6 + i))
    faces = _orient_outward(verts, np.asarray(faces, dtype=np.int64))
    return TriangleMesh(verts, faces, 0)


def subdivide(
    mesh: TriangleMesh, iterations: int, vertex_budget: int = DEFAULT_VERTEX_BUDGET
) -> TriangleMesh:
    """Split every face in four, ``iterations`` times.

    Edge midpoints are shared between the two faces of an edge: they are
    keyed on the ``(min, max)`` vertex-index pair, never on coordinates.
    Face ``f`` produces children ``4f + c`` ordered as
    ``(v1, m12, m31)``, ``(m12, v2, m23)``, ``(m31, m23, v3)``,
    ``(m23, m31, m12)``.
    """
    if iterations < 0:
        raise GridError(f"iterations must be >= 0, got {iterations}")
    # closed triangulated sphere: V = F/2 + 2
    n_final = (mesh.n_faces * 4**iterations) // 2 + 2
    if iterations and n_final > vertex_budget:
        raise MemoryError(
            f"subdividing {iterations} times would create {n_final} vertices "
            f"(budget {vertex_budget})"
        )

    verts = [tuple(v) for v in mesh.vertices]
    faces = mesh.faces
    for _ in range(iterations):
        midpoint: dict[tuple[int, int], int] = {}
        out = np.empty((4 * len(faces), 3), dtype=np.int64)

        def mid(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            k = midpoint.get(key)
            if k is None:
                a, b = verts[key[0]], verts[key[1]]
                k = len(verts)
                verts.append(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2))
                midpoint[key] = k
            return k

        for f, (v1, v2, v3) in enumerate(faces.tolist()):
            m12, m23, m31 = mid(v1, v2), mid(v2, v3), mid(v3, v1)
            out[4 * f] = (v1, m12, m31)
            out[4 * f + 1] = (m12, v2, m23)
            out[4 * f + 2] = (m31, m23, v3)
            out[4 * f + 3] = (m23, m31, m12)
        faces = out
    return TriangleMesh(np.asarray(verts, dtype=float), faces, mesh.level + iterations)


def normalize_to_sphere(icomesh: TriangleMesh) -> TriangleMesh:
    """Project mesh vertices radially onto the unit sphere."""
    norms = np.linalg.norm(icomesh.vertices, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        bad = int(np.flatnonzero((norms == 0) | ~np.isfinite(norms))[0])
        raise GridError(f"vertex {bad} has zero or non-finite norm")
    return TriangleMesh(icomesh.vertices / norms[:, None], icomesh.faces, icomesh.level)


def latlon_to_xyz(lat, lon) -> np.ndarray:
    """Degrees latitude/longitude to unit vectors, shape ``(..., 3)``."""
    lat = np.deg2rad(np.asarray(lat, dtype=float))
    lon = np.deg2rad(np.asarray(lon, dtype=float))
    c = np.cos(lat)
    return np.stack([c * np.cos(lon), c * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_latlon(xyz) -> tuple[np.ndarray, np.ndarray]:
    xyz = np.asarray(xyz, dtype=float)
    lat = np.rad2deg(np.arcsin(np.clip(xyz[..., 2] / np.linalg.norm(xyz, axis=-1), -1, 1)))
    lon = np.rad2deg(np.arctan2(xyz[..., 1], xyz[..., 0]))
    return lat, lon


@dataclass(frozen=True)
class TriangleLocation:
    base_face: int
    subtriangle: int
    vertex_ids: tuple[int, int, int]
    barycentric: tuple[float, float, float]


@dataclass(frozen=True)
class Locations:
    """Vectorised result of :meth:`GeodesicGrid.locate_many`."""

    base_face: np.ndarray
    subtriangle: np.ndarray
    vertex_ids: np.ndarray
    barycentric: np.ndarray
    projected: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.base_face)

    def __getitem__(self, i: int) -> TriangleLocation:
        return TriangleLocation(
            int(self.base_face[i]),
            int(self.subtriangle[i]),
            tuple(int(k) for k in self.vertex_ids[i]),
            tuple(float(b) for b in self.barycentric[i]),
        )


def _planar_barycentric(q, v1, v2, v3) -> np.ndarray:
    """Barycentric coordinates of points ``q`` in coplanar 3-d triangles."""
    e1, e2, d = v2 - v1, v3 - v1, q - v1
    d11 = np.einsum("...i,...i", e1, e1)
    d12 = np.einsum("...i,...i", e1, e2)
    d22 = np.einsum("...i,...i", e2, e2)
    r1 = np.einsum("...i,...i", d, e1)
    r2 = np.einsum("...i,...i", d, e2)
    det = d11 * d22 - d12 * d12
    b2 = (d22 * r1 - d12 * r2) / det
    b3 = (d11 * r2 - d12 * r1) / det
    return np.stack([1.0 - b2 - b3, b2, b3], axis=-1)


class GeodesicGrid:
    """Icomesh/icosphere pair at subdivision level ``nu``.

    Knots are the mesh vertices; knot ``k`` has the same index in both
    meshes. Instances are immutable after construction and safe to share.
    """

    def __init__(self, nu: int, vertex_budget: int = DEFAULT_VERTEX_BUDGET):
        if nu < 0:
            raise GridError(f"level must be >= 0, got {nu}")
        self.nu = int(nu)
        self.base = build_icosahedron()
        self.icomesh = subdivide(self.base, nu, vertex_budget)
        self.icosphere = normalize_to_sphere(self.icomesh)

        verts = self.base.vertices
        tri = verts[self.base.faces]
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        self._normals = normals / np.linalg.norm(normals, axis=1)[:, None]
        # every face of a regular icosahedron is at the same distance from 0
        self._plane_offset = np.einsum("ij,ij->i", self._normals, tri[:, 0])
        self._base_tri = tri

        e = self.icomesh.edges
        K = self.n_knots
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        self._adj_indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=K))])
        self._adj_indices = cols

    @property
    def n_knots(self) -> int:
        return self.icosphere.n_vertices

    @property
    def knots(self) -> np.ndarray:
        """Knot positions on the unit sphere, ``(K, 3)``."""
        return self.icosphere.vertices

    @property
    def adjacency(self) -> list[np.ndarray]:
        p, idx = self._adj_indptr, self._adj_indices
        return [idx[p[k] : p[k + 1]] for k in range(self.n_knots)]

    @property
    def adjacency_csr(self) -> tuple[np.ndarray, np.ndarray]:
        return self._adj_indptr, self._adj_indices

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self._adj_indptr)

    def face_index(self, base_face: int) -> range:
        """Subtriangles (global face ids) descending from a base face."""
        n = 4**self.nu
        return range(base_face * n, (base_face + 1) * n)

    def degree_histogram(self) -> dict[int, int]:
        vals, counts = np.unique(self.degrees, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def edge_arc_lengths(self) -> np.ndarray:
        """Great-circle length (radians) of every mesh edge on the icosphere."""
        e = self.icosphere.edges
        a, b = self.knots[e[:, 0]], self.knots[e[:, 1]]
        return np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.einsum("ij,ij->i", a, b))

    def locate_many(self, points, tol: float = 1e-9) -> Locations:
        """Locate unit vectors ``(n, 3)`` in the level-``nu`` triangles.

        A point is projected gnomonically onto the plane of the base face
        hit by the ray from the origin; the subtriangle is then found by
        descending the split hierarchy one level at a time. Points on a
        shared boundary go to the lowest base face, then to the lowest
        subtriangle index.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.ndim != 2 or p.shape[1] != 3:
            raise GridError(f"points must have shape (n, 3), got {p.shape}")
        n = len(p)
        if n == 0:
            empty = np.zeros((0, 3))
            return Locations(
                np.zeros(0, np.int64), np.zeros(0, np.int64),
                np.zeros((0, 3), np.int64), empty, empty,
            )
        norms = np.linalg.norm(p, axis=1)
        bad = np.flatnonzero(~(np.abs(norms - 1.0) <= tol))
        if len(bad):
            raise GridError(f"point {int(bad[0])} is not a unit vector (norm {norms[bad[0]]!r})")

        score = p @ self._normals.T
        best = score.max(axis=1)
        # lowest-index face among the (numerically) tied candidates
        base = np.argmax(score >= best[:, None] - 1e-13, axis=1)
        normal = self._normals[base]
        q = p * (self._plane_offset[base] / np.einsum("ij,ij->i", p, normal))[:, None]
        tri = self._base_tri[base]
        b = _planar_barycentric(q, tri[:, 0], tri[:, 1], tri[:, 2])
        b = np.clip(b, 0.0, None)
        b /= b.sum(axis=1, keepdims=True)

        sub = np.zeros(n, dtype=np.int64)
        for _ in range(self.nu):
            child = np.full(n, 3, dtype=np.int64)
            for i in (2, 1, 0):
                child[b[:, i] >= 0.5] = i
            nb = np.empty_like(b)
            corner = child < 3
            bc = 2.0 * b[corner]
            ci = child[corner]
            bc[np.arange(len(ci)), ci] -= 1.0
            nb[corner] = bc
            nb[~corner] = 1.0 - 2.0 * b[~corner]
            b = np.clip(nb, 0.0, None)
            b /= b.sum(axis=1, keepdims=True)
            sub = 4 * sub + child

        face = base * 4**self.nu + sub
        vid = self.icomesh.faces[face]
        v = self.icomesh.vertices[vid]
        bary = _planar_barycentric(q, v[:, 0], v[:, 1], v[:, 2])
        worst = bary.min()
        if worst < -tol:
            i = int(np.argmin(bary.min(axis=1)))
            raise GridError(f"point location failed for point {i} (barycentric {bary[i]})")
        # negatives are round-off on a shared boundary; tiny positives at knots
        bary = np.where(bary < 1e-14, 0.0, bary)
        bary /= bary.sum(axis=1, keepdims=True)
        return Locations(base, face, vid, bary, q)

    def locate(self, point) -> TriangleLocation:
        return self.locate_many(np.asarray(point, dtype=float)[None, :])[0]

    def summary(self) -> dict:
        arcs = self.edge_arc_lengths() * EARTH_RADIUS_KM
        return {
            "nu": self.nu,
            "V": self.icosphere.n_vertices,
            "E": self.icosphere.n_edges,
            "F": self.icosphere.n_faces,
            "euler": self.icosphere.euler_characteristic(),
            "degree_histogram": self.degree_histogram(),
            "spacing_km": {
                "min": float(arcs.min()),
                "max": float(arcs.max()),
                "mean": float(arcs.mean()),
            },
        }
