"""Triangular lattice complex restricted to a convex polygonal domain.

Nodes are addressed by integer index coordinates (a, b) with physical position
eps * (a * e1 + b * nu).  All topology (bonds, triangles, incidences) is computed
in index space; floats only appear in positions.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.logic.errors import DomainError, EmptyComplexError, ComplexValidationError, LoopError, MissingBondError

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)
E1 = np.array([1.0, 0.0])
NU = np.array([0.5, SQRT3 / 2.0])
ETA = NU - E1

# Columns map lattice coordinates (p, q) to the plane: p*e1 + q*nu
LATTICE_BASIS = np.column_stack([E1, NU])
LATTICE_BASIS_INV = np.linalg.inv(LATTICE_BASIS)

# Canonical bond directions in index space: e1, nu, eta
BOND_STEPS = np.array([[1, 0], [0, 1], [-1, 1]], dtype=np.int64)
BOND_UNITS = np.vstack([E1, NU, ETA])


@dataclass(frozen=True)
class LatticeVector:
    """Integer combination p*e1 + q*nu."""
    p: int
    q: int

    def __post_init__(self):
        for name in ("p", "q"):
            value = getattr(self, name)
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"Lattice coordinate {name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @classmethod
    def from_sequence(cls, pq: Sequence[int]):
        if len(pq) != 2:
            raise ValueError(f"Expected two lattice coordinates, got {pq!r}")
        return cls(int(pq[0]), int(pq[1]))

    @property
    def vector(self) -> np.ndarray:
        return self.p * E1 + self.q * NU

    @property
    def norm_squared(self) -> int:
        # |p e1 + q nu|^2, exact in integers
        return self.p * self.p + self.p * self.q + self.q * self.q

    def as_tuple(self) -> Tuple[int, int]:
        return (self.p, self.q)

    def __add__(self, other):
        return type(self)(self.p + other.p, self.q + other.q)

    def __sub__(self, other):
        return type(self)(self.p - other.p, self.q - other.q)

    def __neg__(self):
        return type(self)(-self.p, -self.q)

    def __mul__(self, k: int):
        return type(self)(self.p * int(k), self.q * int(k))

    __rmul__ = __mul__


class Orientation(str, Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True, order=True)
class TriangleId:
    a: int
    b: int
    orientation: Orientation

    def vertices(self) -> List[Tuple[int, int]]:
        """Vertex index coordinates in counterclockwise order."""
        a, b = self.a, self.b
        if self.orientation == Orientation.UP:
            return [(a, b), (a + 1, b), (a, b + 1)]
        return [(a, b), (a + 1, b - 1), (a + 1, b)]

    def __str__(self) -> str:
        name = "Up" if self.orientation == Orientation.UP else "Down"
        return f"{name}({self.a},{self.b})"


def lattice_to_physical(pq) -> np.ndarray:
    """Map integer lattice coordinates (..., 2) to plane vectors (..., 2)."""
    return np.asarray(pq, dtype=float) @ LATTICE_BASIS.T


def physical_to_lattice(x) -> np.ndarray:
    """Inverse of lattice_to_physical, real valued."""
    return np.asarray(x, dtype=float) @ LATTICE_BASIS_INV.T


def lattice_wedge(x, y):
    """p1*q2 - q1*p2; the planar wedge of the embedded vectors is sqrt(3)/2 times this."""
    x = np.asarray(x)
    y = np.asarray(y)
    return x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]


def hex_distance(da, db):
    """Graph distance on the triangular lattice between index offsets."""
    da = np.asarray(da)
    db = np.asarray(db)
    return np.maximum(np.maximum(np.abs(da), np.abs(db)), np.abs(da + db))


def barycenter(t: TriangleId, epsilon: float) -> np.ndarray:
    """Arithmetic mean of the three vertex positions of t."""
    verts = np.array(t.vertices(), dtype=float)
    return epsilon * lattice_to_physical(verts.mean(axis=0))


class ConvexPolygon:
    """Convex polygon with counterclockwise vertices."""

    def __init__(self, vertices):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DomainError(f"Polygon needs at least three 2D vertices, got shape {verts.shape}")
        nxt = np.roll(verts, -1, axis=0)
        signed_area = 0.5 * np.sum(verts[:, 0] * nxt[:, 1] - nxt[:, 0] * verts[:, 1])
        if abs(signed_area) <= 1e-14 * max(1.0, np.abs(verts).max() ** 2):
            raise DomainError("Polygon has empty interior")
        if signed_area < 0:
            verts = verts[::-1].copy()
        edges = np.roll(verts, -1, axis=0) - verts
        turns = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        scale = np.abs(edges).max() ** 2
        if np.any(turns < -1e-12 * scale):
            raise DomainError("Polygon is not convex")
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths == 0):
            raise DomainError("Polygon has repeated vertices")
        self.vertices = verts
        self.vertices.setflags(write=False)
        # inward unit normals
        self._normals = np.column_stack([-edges[:, 1], edges[:, 0]]) / lengths[:, None]

    @classmethod
    def square(cls, half_width: float, center=(0.0, 0.0)):
        if half_width <= 0:
            raise DomainError(f"Square half width must be positive, got {half_width}")
        cx, cy = center
        h = half_width
        return cls([[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]])

    @property
    def area(self) -> float:
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        return float(0.5 * np.sum(v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]))

    @property
    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        xmin, ymin = self.vertices.min(axis=0)
        xmax, ymax = self.vertices.max(axis=0)
        return float(xmin), float(xmax), float(ymin), float(ymax)

    def signed_distances(self, points) -> np.ndarray:
        """Distance of each point to each edge line, positive on the inner side."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts[:, None, :] - self.vertices[None, :, :]
        return np.einsum("pkd,kd->pk", rel, self._normals)

    def contains(self, points, tol: float = 0.0, strict: bool = False) -> np.ndarray:
        d = self.signed_distances(points).min(axis=1)
        return d > tol if strict else d >= -tol

    def distance_to_boundary(self, points) -> np.ndarray:
        """For points inside a convex polygon this is the minimum edge-line distance."""
        return self.signed_distances(points).min(axis=1)

    def translate(self, shift):
        return ConvexPolygon(self.vertices + np.asarray(shift, dtype=float))

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.tolist()})"


class LatticeComplex:
    """Nodes, bonds and triangles of eps*T inside a convex domain.

    Bonds are stored once each in a canonical orientation (tail -> head along
    e1, nu or eta); the reversed ordered pair is implied. Triangles keep their
    counterclockwise vertex triple together with the bond ids of the three
    edges and the sign (+1/-1) relating the counterclockwise traversal to the
    canonical bond orientation.
    """

    def __init__(self, epsilon, domain, origin, node_grid, nodes, bond_tail, bond_head, bond_dir,
                 tri_index, tri_up, tri_nodes, tri_bonds, tri_signs, up_grid, down_grid):
        self.epsilon = float(epsilon)
        self.domain = domain
        self._origin = origin
        self._node_grid = node_grid
        self.nodes = nodes
        self.bond_tail = bond_tail
        self.bond_head = bond_head
        self.bond_dir = bond_dir
        self.tri_index = tri_index
        self.tri_up = tri_up
        self.tri_nodes = tri_nodes
        self.tri_bonds = tri_bonds
        self.tri_signs = tri_signs
        self._up_grid = up_grid
        self._down_grid = down_grid

        self.positions = self.epsilon * lattice_to_physical(nodes)
        self.bond_steps = BOND_STEPS[bond_dir]
        self.bond_units = BOND_UNITS[bond_dir]

        # bond -> incident triangles (at most two)
        n_bonds = len(bond_tail)
        flat_bonds = tri_bonds.ravel()
        flat_tris = np.repeat(np.arange(len(tri_up)), 3)
        order = np.lexsort((flat_tris, flat_bonds))
        sorted_bonds = flat_bonds[order]
        sorted_tris = flat_tris[order]
        first = np.ones(len(sorted_bonds), dtype=bool)
        first[1:] = sorted_bonds[1:] != sorted_bonds[:-1]
        self.bond_triangles = -np.ones((n_bonds, 2), dtype=np.int64)
        self.bond_triangles[sorted_bonds, np.where(first, 0, 1)] = sorted_tris
        self.bond_triangle_count = np.bincount(flat_bonds, minlength=n_bonds)
        self.node_triangle_count = np.bincount(tri_nodes.ravel(), minlength=len(nodes))

        for arr in (self.nodes, self.positions, self.bond_tail, self.bond_head, self.bond_dir,
                    self.bond_steps, self.bond_units, self.tri_index, self.tri_up, self.tri_nodes,
                    self.tri_bonds, self.tri_signs, self.bond_triangles, self.bond_triangle_count,
                    self.node_triangle_count):
            arr.setflags(write=False)

    # --- sizes ---------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_bonds(self) -> int:
        return len(self.bond_tail)

    @property
    def n_triangles(self) -> int:
        return len(self.tri_up)

    # --- flags ---------------------------------------------------------------

    @property
    def dangling_bonds(self) -> np.ndarray:
        """Mask of bonds that are an edge of no triangle of the complex."""
        return self.bond_triangle_count == 0

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Nodes on the boundary of the union of triangles (fewer than 6 incident triangles)."""
        return self.node_triangle_count < 6

    @cached_property
    def is_connected(self) -> bool:
        shared = self.bond_triangle_count == 2
        pairs = self.bond_triangles[shared]
        n = self.n_triangles
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        n_components, _ = connected_components(graph, directed=False)
        return n_components == 1

    @cached_property
    def euler_characteristic(self) -> int:
        n_edges = int(np.count_nonzero(self.bond_triangle_count))
        return self.n_nodes - n_edges + self.n_triangles

    @property
    def is_simply_connected(self) -> bool:
        return self.is_connected and self.euler_characteristic == 1

    def validate(self) -> None:
        """Raise ComplexValidationError unless the union of triangles is a topological disk."""
        if not self.is_connected:
            raise ComplexValidationError("Lattice complex is not edge-connected")
        if self.euler_characteristic != 1:
            raise ComplexValidationError(
                f"Lattice complex is not simply connected (Euler characteristic {self.euler_characteristic})"
            )

    # --- lookups -------------------------------------------------------------

    def node_index(self, a, b) -> np.ndarray:
        """Node ids for index coordinates; -1 where the node is not in the complex."""
        a, b = np.broadcast_arrays(np.atleast_1d(np.asarray(a, dtype=np.int64)) - self._origin[0],
                                   np.atleast_1d(np.asarray(b, dtype=np.int64)) - self._origin[1])
        na, nb = self._node_grid.shape
        ok = (a >= 0) & (a < na) & (b >= 0) & (b < nb)
        out = -np.ones(a.shape, dtype=np.int64)
        out[ok] = self._node_grid[a[ok], b[ok]]
        return out

    def find_bonds(self, tails, heads) -> Tuple[np.ndarray, np.ndarray]:
        """Bond ids and signs for ordered node pairs.

        sign is +1 when (tail, head) matches the canonical orientation and -1
        when it is reversed; missing pairs get bond id -1 and sign 0.
        """
        tails = np.atleast_1d(np.asarray(tails, dtype=np.int64))
        heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
        delta = self.nodes[heads] - self.nodes[tails]
        bond_ids = -np.ones(len(tails), dtype=np.int64)
        signs = np.zeros(len(tails), dtype=np.int64)
        lookup = self._bond_lookup
        for k, step in enumerate(BOND_STEPS):
            fwd = np.all(delta == step, axis=1)
            bwd = np.all(delta == -step, axis=1)
            bond_ids[fwd] = lookup[tails[fwd], k]
            signs[fwd] = 1
            bond_ids[bwd] = lookup[heads[bwd], k]
            signs[bwd] = -1
        signs[bond_ids < 0] = 0
        return bond_ids, signs

    def find_bond(self, i: int, j: int) -> Tuple[int, int]:
        bond_ids, signs = self.find_bonds([i], [j])
        if bond_ids[0] < 0:
            raise MissingBondError(f"No bond between nodes {i} and {j}")
        return int(bond_ids[0]), int(signs[0])

    @cached_property
    def _bond_lookup(self) -> np.ndarray:
        lookup = -np.ones((self.n_nodes, 3), dtype=np.int64)
        lookup[self.bond_tail, self.bond_dir] = np.arange(self.n_bonds)
        return lookup

    def triangle_index(self, t: TriangleId) -> int:
        grid = self._up_grid if t.orientation == Orientation.UP else self._down_grid
        a = t.a - self._origin[0]
        b = t.b - self._origin[1]
        na, nb = grid.shape
        if 0 <= a < na and 0 <= b < nb and grid[a, b] >= 0:
            return int(grid[a, b])
        raise MissingBondError(f"Triangle {t} is not in the complex")

    def triangle_id(self, k: int) -> TriangleId:
        a, b = self.tri_index[k]
        return TriangleId(int(a), int(b), Orientation.UP if self.tri_up[k] else Orientation.DOWN)

    def triangle_ids(self, indices: Optional[Iterable[int]] = None) -> List[TriangleId]:
        if indices is None:
            indices = range(self.n_triangles)
        return [self.triangle_id(int(k)) for k in indices]

    def incident_triangles(self, i: int, j: int) -> List[TriangleId]:
        """Triangles of the complex having the bond {i, j} as an edge (0, 1 or 2 of them)."""
        bond, _ = self.find_bond(i, j)
        return [self.triangle_id(int(k)) for k in self.bond_triangles[bond] if k >= 0]

    @cached_property
    def tri_barycenters3(self) -> np.ndarray:
        """Barycenters in index coordinates scaled by 3 (exact integers)."""
        a = self.tri_index[:, 0]
        b = self.tri_index[:, 1]
        out = np.where(self.tri_up[:, None],
                       np.column_stack([3 * a + 1, 3 * b + 1]),
                       np.column_stack([3 * a + 2, 3 * b - 1]))
        out.setflags(write=False)
        return out

    @cached_property
    def barycenters(self) -> np.ndarray:
        out = self.epsilon * lattice_to_physical(self.tri_barycenters3 / 3.0)
        out.setflags(write=False)
        return out

    @property
    def triangle_area(self) -> float:
        return SQRT3 * self.epsilon ** 2 / 4.0

    def __repr__(self) -> str:
        return (f"LatticeComplex(epsilon={self.epsilon}, nodes={self.n_nodes}, "
                f"bonds={self.n_bonds}, triangles={self.n_triangles})")


def _index_ranges(domain: ConvexPolygon, epsilon: float, margin: int = 2):
    xmin, xmax, ymin, ymax = domain.bounds
    row = epsilon * SQRT3 / 2.0
    b_lo = int(np.floor(ymin / row)) - margin
    b_hi = int(np.ceil(ymax / row)) + margin
    a_lo = int(np.floor(xmin / epsilon - b_hi / 2.0)) - margin
    a_hi = int(np.ceil(xmax / epsilon - b_lo / 2.0)) + margin
    return a_lo, a_hi, b_lo, b_hi


def build_lattice(domain: ConvexPolygon, epsilon: float, closed: bool = True) -> LatticeComplex:
    """Build the lattice complex of all triangles of eps*T contained in the domain.

    Args:
        domain: convex polygon.
        epsilon: lattice spacing.
        closed: keep triangles whose vertices lie on the domain boundary.

    Returns:
        LatticeComplex

    Raises:
        EmptyComplexError: no triangle fits inside the domain.
    """
    if not epsilon > 0:
        raise DomainError(f"Lattice spacing must be positive, got {epsilon}")

    a_lo, a_hi, b_lo, b_hi = _index_ranges(domain, epsilon)
    na, nb = a_hi - a_lo + 1, b_hi - b_lo + 1
    ga, gb = np.meshgrid(np.arange(a_lo, a_hi + 1), np.arange(b_lo, b_hi + 1), indexing="ij")
    grid_pos = epsilon * lattice_to_physical(np.stack([ga, gb], axis=-1).reshape(-1, 2))
    inside = domain.contains(grid_pos, tol=1e-9 * epsilon, strict=not closed).reshape(na, nb)
    # border cells of the grid are never inside thanks to the margin
    inside[0, :] = inside[-1, :] = False
    inside[:, 0] = inside[:, -1] = False

    up = inside[:-1, :-1] & inside[1:, :-1] & inside[:-1, 1:]
    # down[ia, jb] is Down(a_lo + ia, b_lo + jb + 1)
    down = inside[:-1, 1:] & inside[1:, 1:] & inside[1:, :-1]
    if not up.any() and not down.any():
        raise EmptyComplexError(f"No lattice triangle of size {epsilon} fits in {domain}")

    used = np.zeros_like(inside)
    used[:-1, :-1] |= up
    used[1:, :-1] |= up
    used[:-1, 1:] |= up
    used[:-1, 1:] |= down
    used[1:, 1:] |= down
    used[1:, :-1] |= down

    node_grid = -np.ones((na, nb), dtype=np.int64)
    n_nodes = int(used.sum())
    node_grid[used] = np.arange(n_nodes)
    ia, ib = np.nonzero(used)
    nodes = np.column_stack([ia + a_lo, ib + b_lo]).astype(np.int64)

    # bonds, ordered by (tail, direction)
    heads = -np.ones((n_nodes, 3), dtype=np.int64)
    for k, (da, db) in enumerate(BOND_STEPS):
        heads[:, k] = node_grid[ia + da, ib + db]
    valid = heads >= 0
    bond_tail = np.repeat(np.arange(n_nodes), 3).reshape(n_nodes, 3)[valid]
    bond_dir = np.tile(np.arange(3), n_nodes).reshape(n_nodes, 3)[valid]
    bond_head = heads[valid]
    bond_of = -np.ones((n_nodes, 3), dtype=np.int64)
    bond_of[valid] = np.arange(int(valid.sum()))

    # triangles sorted by (a, b, orientation)
    ua, ub = np.nonzero(up)
    da_, db_ = np.nonzero(down)
    db_ = db_ + 1
    tri_a = np.concatenate([ua, da_])
    tri_b = np.concatenate([ub, db_])
    tri_up = np.concatenate([np.ones(len(ua), dtype=bool), np.zeros(len(da_), dtype=bool)])
    order = np.lexsort((~tri_up, tri_b, tri_a))
    tri_a, tri_b, tri_up = tri_a[order], tri_b[order], tri_up[order]

    A = node_grid[tri_a, tri_b]
    B = node_grid[tri_a + 1, tri_b]
    C = node_grid[tri_a, np.minimum(tri_b + 1, nb - 1)]
    D = node_grid[tri_a + 1, np.maximum(tri_b - 1, 0)]

    tri_nodes = np.where(tri_up[:, None], np.column_stack([A, B, C]), np.column_stack([A, D, B]))
    up_bonds = np.column_stack([bond_of[A, 0], bond_of[B, 2], bond_of[A, 1]])
    down_bonds = np.column_stack([bond_of[D, 2], bond_of[D, 1], bond_of[A, 0]])
    tri_bonds = np.where(tri_up[:, None], up_bonds, down_bonds)
    tri_signs = np.where(tri_up[:, None], np.array([1, 1, -1]), np.array([-1, 1, -1])).astype(np.int64)

    n_tris = len(tri_up)
    up_grid = -np.ones((na, nb), dtype=np.int64)
    down_grid = -np.ones((na, nb), dtype=np.int64)
    idx = np.arange(n_tris)
    up_grid[tri_a[tri_up], tri_b[tri_up]] = idx[tri_up]
    down_grid[tri_a[~tri_up], tri_b[~tri_up]] = idx[~tri_up]
    tri_index = np.column_stack([tri_a + a_lo, tri_b + b_lo]).astype(np.int64)

    complex_ = LatticeComplex(
        epsilon=epsilon, domain=domain, origin=(a_lo, b_lo), node_grid=node_grid, nodes=nodes,
        bond_tail=bond_tail, bond_head=bond_head, bond_dir=bond_dir, tri_index=tri_index,
        tri_up=tri_up, tri_nodes=tri_nodes, tri_bonds=tri_bonds, tri_signs=tri_signs,
        up_grid=up_grid, down_grid=down_grid,
    )

    logger.info(f"Built lattice eps={epsilon:g}: {complex_.n_nodes} nodes, "
                f"{complex_.n_bonds} bonds, {complex_.n_triangles} triangles")
    n_dangling = int(complex_.dangling_bonds.sum())
    if n_dangling:
        logger.warning(f"{n_dangling} bonds are edges of no triangle (flagged as dangling)")
    if not complex_.is_simply_connected:
        logger.warning(f"Lattice complex at eps={epsilon:g} is not a topological disk "
                       f"(connected={complex_.is_connected}, chi={complex_.euler_characteristic})")
    return complex_


def lattice_hexagon(complex_: LatticeComplex, center_node: int, radius: int) -> np.ndarray:
    """Indices of the triangles filling the lattice hexagon of the given radius around a node.

    Raises LoopError when part of the hexagon falls outside the complex.
    """
    if radius < 1:
        raise ValueError(f"Hexagon radius must be at least 1, got {radius}")
    center = complex_.nodes[center_node]
    rel = complex_.nodes[complex_.tri_nodes] - center
    inside = np.all(hex_distance(rel[..., 0], rel[..., 1]) <= radius, axis=1)
    found = np.nonzero(inside)[0]
    if len(found) != 6 * radius * radius:
        raise LoopError(f"Hexagon of radius {radius} around node {center_node} leaves the complex")
    return found


def boundary_loop(complex_: LatticeComplex, triangles) -> List[int]:
    """Counterclockwise node cycle bounding a disk-like union of triangles.

    The first node is not repeated at the end.
    """
    triangles = np.asarray(triangles, dtype=np.int64)
    if len(triangles) == 0:
        raise LoopError("Empty triangle set has no boundary")
    verts = complex_.tri_nodes[triangles]
    tails = verts.ravel()
    heads = np.roll(verts, -1, axis=1).ravel()
    directed = set(zip(tails.tolist(), heads.tolist()))
    nxt = {}
    for i, j in directed:
        if (j, i) in directed:
            continue
        if i in nxt:
            raise LoopError(f"Triangle set is pinched at node {i}")
        nxt[i] = j
    start = min(nxt)
    loop = [start]
    node = nxt[start]
    while node != start:
        loop.append(node)
        node = nxt[node]
        if len(loop) > len(nxt):
            raise LoopError("Boundary walk did not close")
    if len(loop) != len(nxt):
        raise LoopError("Triangle set has more than one boundary component")
    return loop
