import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geopspline.grid import (
    GeodesicGrid,
    GridError,
    build_icosahedron,
    latlon_to_xyz,
    normalize_to_sphere,
    subdivide,
    vertex_count,
)

from conftest import random_unit_vectors


def test_icosahedron_counts_and_pole():
    ico = build_icosahedron()
    assert (ico.n_vertices, ico.n_faces, ico.n_edges) == (12, 20, 30)
    assert ico.level == 0
    assert any(tuple(v) == (0.0, 0.0, 1.0) for v in ico.vertices)
    np.testing.assert_allclose(np.linalg.norm(ico.vertices, axis=1), 1.0, atol=1e-15)


def test_icosahedron_every_vertex_has_five_neighbours(grids):
    assert grids(0).degree_histogram() == {5: 12}


def test_icosahedron_orientation_convention():
    ico = build_icosahedron()
    # a neighbour of the pole lies in the x-z plane at longitude 0
    assert ico.vertices[1][1] == 0.0 and ico.vertices[1][0] > 0


def test_faces_are_outward_and_equilateral():
    ico = build_icosahedron()
    tri = ico.vertices[ico.faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    assert np.all(np.einsum("ij,ij->i", normals, tri.sum(axis=1)) > 0)
    sides = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2)
    np.testing.assert_allclose(sides, sides[0, 0], rtol=1e-12)


def test_subdivide_zero_iterations_is_identity():
    ico = build_icosahedron()
    out = subdivide(ico, 0)
    np.testing.assert_array_equal(out.vertices, ico.vertices)
    np.testing.assert_array_equal(out.faces, ico.faces)


def test_subdivide_once_brute_force_midpoint_count():
    ico = build_icosahedron()
    # every edge contributes one midpoint: 12 + 30
    edges = {tuple(sorted(e)) for f in ico.faces.tolist() for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0]))}
    out = subdivide(ico, 1)
    assert out.n_vertices == 12 + len(edges) == 42
    assert out.n_faces == 80


@pytest.mark.parametrize("nu", range(0, 7))
def test_node_count_law_and_euler(nu):
    mesh = subdivide(build_icosahedron(), nu)
    assert mesh.n_vertices == vertex_count(nu) == 10 * 4**nu + 2
    assert mesh.n_faces == 20 * 4**nu
    assert mesh.n_edges == 30 * 4**nu
    assert mesh.euler_characteristic() == 2
    if nu >= 1:
        # equals 5 * 2^(2(nu-1)+3) + 2
        assert mesh.n_vertices == 5 * 2 ** (2 * (nu - 1) + 3) + 2


def test_level_five_has_10242_knots(grids):
    assert grids(5).n_knots == 10242


@pytest.mark.parametrize("nu", [1, 2, 3, 4])
def test_degree_histogram(grids, nu):
    g = grids(nu)
    assert g.degree_histogram() == {5: 12, 6: g.n_knots - 12}


def test_adjacency_symmetric_no_self(grids):
    g = grids(3)
    adj = g.adjacency
    for k, nbrs in enumerate(adj):
        assert k not in nbrs
        assert np.all(np.diff(nbrs) > 0)
        for j in nbrs:
            assert k in adj[j]


def test_subdivide_vertex_budget():
    with pytest.raises(MemoryError):
        subdivide(build_icosahedron(), 5, vertex_budget=1000)
    with pytest.raises(GridError):
        subdivide(build_icosahedron(), -1)


def test_normalize_to_sphere(grids):
    g = grids(4)
    np.testing.assert_allclose(np.linalg.norm(g.icosphere.vertices, axis=1), 1.0, atol=1e-12)
    assert tuple(g.icosphere.vertices[0]) == (0.0, 0.0, 1.0)
    ico = build_icosahedron()
    m = subdivide(ico, 1)
    v, w = ico.vertices[m.faces[0][0]], m.vertices[m.faces[0][1]]
    np.testing.assert_allclose(normalize_to_sphere(m).vertices[m.faces[0][1]], w / np.linalg.norm(w))
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_normalize_rejects_zero_vertex():
    ico = build_icosahedron()
    bad = type(ico)(np.vstack([ico.vertices, [[0, 0, 0]]]), ico.faces, 0)
    with pytest.raises(GridError):
        normalize_to_sphere(bad)


def test_icomesh_vertices_lie_on_base_faces(grids):
    g = grids(3)
    base = g.base
    for b in range(20):
        faces = g.icomesh.faces[list(g.face_index(b))]
        pts = g.icomesh.vertices[np.unique(faces)]
        tri = base.vertices[base.faces[b]]
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        np.testing.assert_allclose((pts - tri[0]) @ n, 0.0, atol=1e-14)


def test_no_two_vertices_closer_than_half_min_edge(grids):
    from scipy.spatial import cKDTree

    g = grids(4)
    e = g.icosphere.edges
    min_edge = np.linalg.norm(g.knots[e[:, 0]] - g.knots[e[:, 1]], axis=1).min()
    d, _ = cKDTree(g.knots).query(g.knots, k=2)
    assert d[:, 1].min() > min_edge / 2


def test_every_subtriangle_reachable_from_one_base_face(grids):
    g = grids(2)
    seen = np.concatenate([list(g.face_index(b)) for b in range(20)])
    assert sorted(seen) == list(range(g.icomesh.n_faces))


# --- point location -------------------------------------------------------


def test_locate_knot(grids):
    g = grids(3)
    for k in [0, 5, 11, 100, 641]:
        loc = g.locate(g.knots[k])
        assert k in loc.vertex_ids
        assert sorted(loc.barycentric) == [0.0, 0.0, 1.0]
        assert loc.barycentric[loc.vertex_ids.index(k)] == 1.0


def test_locate_normalized_centroid(grids):
    g = grids(3)
    for f in [0, 17, 400, 1279]:
        tri = g.icomesh.vertices[g.icomesh.faces[f]]
        p = tri.mean(axis=0)
        p /= np.linalg.norm(p)
        loc = g.locate(p)
        assert loc.subtriangle == f
        np.testing.assert_allclose(loc.barycentric, 1 / 3, atol=1e-6)


def test_locate_round_trip(grids, rng):
    g = grids(4)
    pts = random_unit_vectors(rng, 1000)
    loc = g.locate_many(pts)
    v = g.icomesh.vertices[loc.vertex_ids]
    assert np.all(loc.barycentric >= 0)
    np.testing.assert_allclose(loc.barycentric.sum(axis=1), 1.0, atol=1e-12)
    q = np.einsum("ij,ijk->ik", loc.barycentric, v)
    # re-embedded point lies in the plane of the reported triangle
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    np.testing.assert_allclose(np.einsum("ij,ij->i", q - v[:, 0], n), 0.0, atol=1e-13)
    back = q / np.linalg.norm(q, axis=1)[:, None]
    ang = np.arctan2(np.linalg.norm(np.cross(back, pts), axis=1), np.einsum("ij,ij->i", back, pts))
    assert ang.max() < 1e-9
    assert np.all(loc.subtriangle // 4**g.nu == loc.base_face)


def test_locate_total_on_dense_quasirandom_sample(grids):
    from scipy.stats import qmc

    g = grids(3)
    u = qmc.Halton(d=2, seed=3).random(100_000)
    lat = np.rad2deg(np.arcsin(2 * u[:, 0] - 1))
    lon = 360 * u[:, 1] - 180
    loc = g.locate_many(latlon_to_xyz(lat, lon))
    assert len(loc) == 100_000
    assert loc.barycentric.min() >= 0
    np.testing.assert_allclose(loc.barycentric.sum(axis=1), 1.0, atol=1e-12)


def test_locate_boundary_tie_goes_to_lowest_face(grids):
    g = grids(0)
    ico = g.base
    # midpoint of an edge shared by faces 0 and 1 (north-pole fan)
    shared = set(ico.faces[0]) & set(ico.faces[1])
    i, j = sorted(shared)
    p = ico.vertices[i] + ico.vertices[j]
    p /= np.linalg.norm(p)
    loc = g.locate(p)
    assert loc.base_face == 0
    np.testing.assert_allclose(sorted(loc.barycentric), [0, 0.5, 0.5], atol=1e-12)


def test_locate_rejects_non_unit(grids):
    with pytest.raises(GridError):
        grids(1).locate([0.0, 0.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(
    lat=st.floats(-90, 90, allow_nan=False),
    lon=st.floats(-180, 180, allow_nan=False),
)
def test_locate_any_latlon(lat, lon):
    g = _grid2()
    p = latlon_to_xyz(lat, lon)
    p = p / np.linalg.norm(p)
    loc = g.locate(p)
    b = np.array(loc.barycentric)
    assert b.min() >= 0 and abs(b.sum() - 1) < 1e-12
    q = b @ g.icomesh.vertices[list(loc.vertex_ids)]
    assert np.allclose(q / np.linalg.norm(q), p, atol=1e-9)


_G2 = []


def _grid2():
    if not _G2:
        _G2.append(GeodesicGrid(2))
    return _G2[0]
