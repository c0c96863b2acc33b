import numpy as np
import pytest

from app.logic.errors import DomainError, EmptyComplexError, LoopError, MissingBondError
from app.logic.lattice import (
    ETA,
    NU,
    SQRT3,
    ConvexPolygon,
    LatticeVector,
    Orientation,
    TriangleId,
    barycenter,
    boundary_loop,
    build_lattice,
    hex_distance,
    lattice_hexagon,
    lattice_to_physical,
    physical_to_lattice,
)


def test_lattice_vector_embedding_and_norm():
    assert np.allclose(LatticeVector(-1, 1).vector, ETA)
    assert np.allclose(LatticeVector(0, 1).vector, NU)
    for p, q in [(1, 0), (0, 1), (-1, 1), (1, -1)]:
        v = LatticeVector(p, q)
        assert v.norm_squared == 1
        assert np.isclose(np.dot(v.vector, v.vector), 1.0)
    assert LatticeVector(2, 3).norm_squared == 4 + 6 + 9


def test_lattice_vector_arithmetic_is_exact():
    a, b = LatticeVector(3, -2), LatticeVector(-1, 5)
    assert a + b == LatticeVector(2, 3)
    assert a - b == LatticeVector(4, -7)
    assert -a == LatticeVector(-3, 2)
    assert 2 * a == LatticeVector(6, -4)


def test_lattice_vector_rejects_non_integers():
    with pytest.raises(TypeError):
        LatticeVector(0.5, 1)
    with pytest.raises(TypeError):
        LatticeVector(True, 0)


def test_physical_round_trip():
    pq = np.array([[2, -3], [0, 7]])
    assert np.allclose(physical_to_lattice(lattice_to_physical(pq)), pq)


def test_triangle_vertices_are_counterclockwise():
    for t in [TriangleId(0, 0, Orientation.UP), TriangleId(3, -2, Orientation.DOWN)]:
        v = lattice_to_physical(np.array(t.vertices()))
        e1, e2 = v[1] - v[0], v[2] - v[0]
        assert e1[0] * e2[1] - e1[1] * e2[0] > 0


def test_down_triangle_barycenter():
    assert np.allclose(barycenter(TriangleId(0, 0, Orientation.DOWN), 1.0), [0.5, -SQRT3 / 6])
    assert np.allclose(barycenter(TriangleId(0, 0, Orientation.UP), 1.0), [0.5, SQRT3 / 6])


def test_hex_distance():
    assert hex_distance(1, 0) == 1
    assert hex_distance(-1, 1) == 1
    assert hex_distance(1, 1) == 2
    assert hex_distance(2, -1) == 2


def test_polygon_validation():
    with pytest.raises(DomainError):
        ConvexPolygon([[0, 0], [1, 0], [2, 0]])
    with pytest.raises(DomainError):
        ConvexPolygon([[0, 0], [2, 0], [1, 0.2], [1, 2]])
    clockwise = ConvexPolygon([[0, 0], [0, 1], [1, 1], [1, 0]])
    assert clockwise.area == pytest.approx(1.0)


def test_polygon_distance_and_containment(square):
    d = square.distance_to_boundary([[0.0, 0.0], [0.5, 0.25]])
    assert np.allclose(d, [1.0, 0.5])
    assert square.contains([[1.0, 0.0]])[0]
    assert not square.contains([[1.0, 0.0]], strict=True)[0]
    assert square.translate([1.0, 0.0]).contains([[1.5, 0.0]], strict=True)[0]


def test_triangle_count_matches_area(cx8):
    expected = 16 / (SQRT3 * (1 / 8) ** 2)
    assert abs(cx8.n_triangles - expected) / expected < 0.1


def test_every_triangle_has_the_reference_area(cx8):
    v = cx8.positions[cx8.tri_nodes]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    assert np.allclose(areas, cx8.triangle_area)
    assert cx8.triangle_area == pytest.approx(SQRT3 / 4 / 64)


def test_bonds_join_nearest_neighbours(cx8):
    steps = cx8.nodes[cx8.bond_head] - cx8.nodes[cx8.bond_tail]
    assert np.array_equal(steps, cx8.bond_steps)
    lengths = np.linalg.norm(cx8.positions[cx8.bond_head] - cx8.positions[cx8.bond_tail], axis=1)
    assert np.allclose(lengths, cx8.epsilon)


def test_triangle_edges_match_their_bonds(cx8):
    for k in range(3):
        tails = cx8.nodes[cx8.tri_nodes[:, k]]
        heads = cx8.nodes[cx8.tri_nodes[:, (k + 1) % 3]]
        expected = cx8.tri_signs[:, k, None] * cx8.bond_steps[cx8.tri_bonds[:, k]]
        assert np.array_equal(heads - tails, expected)


def test_all_vertices_inside_closed_domain(cx8, square):
    assert np.all(square.contains(cx8.positions, tol=1e-9))


def test_complex_is_a_disk(cx8):
    cx8.validate()
    assert cx8.is_connected
    assert cx8.is_simply_connected
    assert cx8.euler_characteristic == 1


def test_lookups(cx8):
    i = int(cx8.node_index(0, 0)[0])
    j = int(cx8.node_index(1, 0)[0])
    bond, sign = cx8.find_bond(i, j)
    assert sign == 1
    assert cx8.find_bond(j, i) == (bond, -1)
    assert cx8.node_index(1000, 0)[0] == -1
    with pytest.raises(MissingBondError):
        cx8.find_bond(i, int(cx8.node_index(2, 0)[0]))
    t = TriangleId(0, 0, Orientation.UP)
    assert cx8.triangle_id(cx8.triangle_index(t)) == t
    with pytest.raises(MissingBondError):
        cx8.triangle_index(TriangleId(500, 0, Orientation.UP))
    assert len(cx8.incident_triangles(i, j)) == 2
    assert cx8.node_triangle_count[i] == 6
    assert not cx8.boundary_nodes[i]


def test_barycenters_are_vertex_means(cx8):
    means = cx8.positions[cx8.tri_nodes].mean(axis=1)
    assert np.allclose(cx8.barycenters, means)


def test_empty_domain_raises():
    with pytest.raises(EmptyComplexError):
        build_lattice(ConvexPolygon.square(0.01), 1.0)
    with pytest.raises(DomainError):
        build_lattice(ConvexPolygon.square(1.0), 0.0)


def test_hexagon_and_its_boundary_loop(cx8):
    i = int(cx8.node_index(0, 0)[0])
    tris = lattice_hexagon(cx8, i, 2)
    assert len(tris) == 24
    loop = boundary_loop(cx8, tris)
    assert len(loop) == 12
    pts = cx8.positions[loop]
    nxt = np.roll(pts, -1, axis=0)
    signed_area = 0.5 * np.sum(pts[:, 0] * nxt[:, 1] - nxt[:, 0] * pts[:, 1])
    assert signed_area > 0
    assert signed_area == pytest.approx(24 * cx8.triangle_area)


def test_hexagon_outside_the_complex_raises(cx8):
    i = int(cx8.node_index(0, 0)[0])
    with pytest.raises(LoopError):
        lattice_hexagon(cx8, i, 20)
