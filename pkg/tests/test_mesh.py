import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abm.mesh import (
    DomainSpec,
    MeshError,
    build_domain,
    cut_from_path,
    dual_connected_without,
    insert_pole,
    make_cut,
    read_cut,
    read_mesh,
    refine_around,
    write_cut,
    write_mesh,
)


def check_topology(m):
    assert m.signed_areas().min() > 0
    assert m.euler_characteristic() == 1
    et = m.edge_triangles()
    E, _ = m.edges()
    boundary = et[:, 1] < 0
    assert boundary.sum() == len(m.boundary_edges)
    keys = {tuple(sorted(e)) for e in m.boundary_edges.tolist()}
    assert keys == {tuple(sorted(e)) for e in E[boundary].tolist()}


@pytest.fixture(scope="module")
def disk():
    return build_domain(DomainSpec("unit-disk", 0.05))


def test_disk_topology(disk):
    check_topology(disk)
    assert disk.min_angle() >= 20


def test_square_boundary_on_sides():
    m = build_domain(DomainSpec("unit-square", 0.1))
    check_topology(m)
    B = m.vertices[np.unique(m.boundary_edges)]
    on_side = np.isclose(B, 0, atol=0) | np.isclose(B, 1, atol=0)
    assert on_side.any(axis=1).all()


def test_polygon_domain():
    L = DomainSpec("polygon", 0.1, ((0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)))
    m = build_domain(L)
    check_topology(m)
    assert math.isclose(m.signed_areas().sum(), 0.75, rel_tol=1e-12)


def test_bad_specs():
    with pytest.raises(MeshError):
        DomainSpec("torus", 0.1)
    with pytest.raises(MeshError):
        DomainSpec("unit-disk", 0.0)
    with pytest.raises(MeshError):
        DomainSpec("polygon", 0.1, ((0, 0), (1, 1), (1, 0), (0, 1)))  # self-intersecting


def test_refinement_center_reaches_h_over_8():
    h = 0.1
    m = build_domain(DomainSpec("unit-square", h, refinement_centers=(((0.3, 0.2), 3),)))
    m = insert_pole(m, (0.3, 0.2))
    check_topology(m)
    E, _ = m.edges()
    inc = (E == m.pole).any(axis=1)
    assert m.edge_lengths()[inc].min() <= h / 8 * (1 + 1e-12)


def test_refine_around_keeps_quality():
    m = refine_around(build_domain(DomainSpec("unit-disk", 0.08)), (0.1, 0.0), 0.08, 3)
    check_topology(m)
    assert m.min_angle() >= 20


def test_deterministic():
    a = build_domain(DomainSpec("unit-disk", 0.05))
    b = build_domain(DomainSpec("unit-disk", 0.05))
    assert a.digest() == b.digest()
    assert np.array_equal(a.triangles, b.triangles)


def test_insert_existing_vertex(disk):
    v = 17
    m = insert_pole(disk, disk.vertices[v])
    assert m.pole == v
    assert np.array_equal(m.vertices, disk.vertices)


def test_insert_inside_triangle(disk):
    P = disk.vertices[disk.triangles[5]]
    p = P.mean(axis=0)
    m = insert_pole(disk, p)
    assert m.n_vertices == disk.n_vertices + 1
    assert m.n_triangles == disk.n_triangles + 2
    assert np.array_equal(m.vertices[m.pole], p)
    check_topology(m)


def test_insert_on_edge(disk):
    E, _ = disk.edges()
    et = disk.edge_triangles()
    e = np.flatnonzero(et[:, 1] >= 0)[3]
    p = disk.vertices[E[e]].mean(axis=0)
    m = insert_pole(disk, p)
    assert m.n_triangles == disk.n_triangles + 2
    assert np.array_equal(m.vertices[m.pole], p)
    check_topology(m)


def test_insert_outside_rejected(disk):
    with pytest.raises(MeshError):
        insert_pole(disk, (1.5, 0.0))


def test_cut_hugs_axis(disk):
    m = insert_pole(disk, (0.0, 0.0))
    cut = make_cut(m, m.pole, (1.0, 0.0))
    assert cut.start == m.pole
    P = m.vertices[list(cut.path)]
    assert np.all(np.diff(P[:, 0]) > 0)
    assert np.abs(P[:, 1]).max() <= 0.05
    assert m.boundary_vertex_mask()[cut.end]
    assert dual_connected_without(m, cut)


def test_cut_errors(disk):
    with pytest.raises(MeshError):
        make_cut(disk)  # no pole
    m = insert_pole(disk, (0.0, 0.0))
    with pytest.raises(MeshError):
        cut_from_path(m, [m.pole, m.pole])


def test_text_io_round_trip(disk):
    m = insert_pole(disk, (0.1, 0.05))
    back = read_mesh(write_mesh(m))
    assert back.digest() == m.digest()
    assert back.pole == m.pole
    cut = make_cut(m, m.pole, (0.0, 1.0))
    assert read_cut(write_cut(cut)) == cut
    with pytest.raises(MeshError):
        read_mesh("NOT A MESH\n")


@settings(max_examples=25, deadline=None)
@given(r=st.floats(0.0, 0.85), phi=st.floats(0, 2 * math.pi), d=st.floats(0, 2 * math.pi))
def test_pole_and_cut_properties(r, phi, d):
    base = build_domain(DomainSpec("unit-disk", 0.1))
    p = (r * math.cos(phi), r * math.sin(phi))
    m = insert_pole(base, p)
    check_topology(m)
    assert not m.boundary_vertex_mask()[m.pole]
    cut = make_cut(m, m.pole, (math.cos(d), math.sin(d)))
    assert cut.start == m.pole
    assert len(set(cut.path)) == len(cut.path)
    assert dual_connected_without(m, cut)


def test_insert_near_edge_leaves_no_sliver(disk):
    E, _ = disk.edges()
    et = disk.edge_triangles()
    e = np.flatnonzero(et[:, 1] >= 0)[7]
    t = et[e, 0]
    a, c = disk.vertices[E[e]]
    opp = disk.vertices[[v for v in disk.triangles[t] if v not in E[e]][0]]
    p = 0.5 * (a + c) + 1e-9 * (opp - 0.5 * (a + c))
    m = insert_pole(disk, p)
    assert np.array_equal(m.vertices[m.pole], p)
    assert m.n_triangles == disk.n_triangles + 2
    check_topology(m)
    assert m.min_angle() > 1.0
