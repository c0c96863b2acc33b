"""Recovery pairs: slip concentrated on half-line cuts plus the singular continuum displacement.

Each dislocation sits at a triangle barycenter. A half-line leaves the
barycenter along a lattice direction, and every bond crossing it carries the
slip -eps*b when traversed from the right side of the half-line to its left
side. The circulation of that slip is then -eps*b around the origin triangle
and zero around every other triangle.

All geometric predicates are evaluated on integer index coordinates scaled by
3, so barycenters are exact and no crossing test depends on rounding.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.logic.continuum import BurgersVector, Dislocation, displacement_singular
from app.logic.errors import (
    AdmissibilityError,
    CrossingOrientationError,
    HalfLineObstructedError,
    MissingBondError,
)
from app.logic.fields import (
    DislocationMeasure,
    DisplacementField,
    SlipField,
    check_mild_separation,
)
from app.logic.lattice import (
    BOND_STEPS,
    LatticeComplex,
    LatticeVector,
    Orientation,
    TriangleId,
    lattice_to_physical,
    lattice_wedge,
    physical_to_lattice,
)

logger = logging.getLogger(__name__)

_DIRECTION_BY_BURGERS = {
    (1, 0): 0, (-1, 0): 0,
    (0, 1): 1, (0, -1): 1,
    (-1, 1): 2, (1, -1): 2,
}


def _pq(b) -> Tuple[int, int]:
    if isinstance(b, LatticeVector):
        return b.as_tuple()
    return int(b[0]), int(b[1])


def cut_direction(b) -> LatticeVector:
    """e1 for b = +-e1, nu for b = +-nu, eta for b = +-eta, and e1 for everything else."""
    k = _DIRECTION_BY_BURGERS.get(_pq(b), 0)
    return LatticeVector.from_sequence(BOND_STEPS[k])


@dataclass(frozen=True)
class HalfLine:
    """Ray from a triangle barycenter along a lattice direction."""
    triangle: TriangleId
    direction: LatticeVector
    epsilon: float

    @property
    def origin3(self) -> np.ndarray:
        """Origin in index coordinates scaled by 3."""
        a, b = self.triangle.a, self.triangle.b
        if self.triangle.orientation == Orientation.UP:
            return np.array([3 * a + 1, 3 * b + 1], dtype=np.int64)
        return np.array([3 * a + 2, 3 * b - 1], dtype=np.int64)

    @property
    def origin(self) -> np.ndarray:
        return self.epsilon * lattice_to_physical(self.origin3 / 3.0)

    @property
    def unit_direction(self) -> np.ndarray:
        v = self.direction.vector
        return v / np.linalg.norm(v)

    @property
    def angle(self) -> float:
        d = self.unit_direction
        return float(np.arctan2(d[1], d[0]))


def snap_to_barycenter(x, complex_: LatticeComplex) -> TriangleId:
    """Up triangle of the complex whose barycenter is closest to x.

    Ties within 1e-12*eps go to the smallest (a, b).

    Raises:
        AdmissibilityError: the closest Up barycenter belongs to a triangle
            outside the complex.
    """
    eps = complex_.epsilon
    x = np.asarray(x, dtype=float)
    s = physical_to_lattice(x / eps) - 1.0 / 3.0
    a0, b0 = np.floor(s).astype(int)
    ca, cb = np.meshgrid(np.arange(a0 - 1, a0 + 3), np.arange(b0 - 1, b0 + 3), indexing="ij")
    cand = np.column_stack([ca.ravel(), cb.ravel()])
    centers = eps * lattice_to_physical(cand + 1.0 / 3.0)
    dist = np.linalg.norm(centers - x, axis=1)
    best = dist.min()
    ties = cand[dist <= best + 1e-12 * eps]
    a, b = min(map(tuple, ties.tolist()))
    t = TriangleId(int(a), int(b), Orientation.UP)
    try:
        complex_.triangle_index(t)
    except MissingBondError as e:
        raise AdmissibilityError(f"Point {tuple(x)} snaps to {t}, which is not in the complex") from e
    return t


class Crossings(NamedTuple):
    """Bonds crossing a half-line.

    signs[k] is +1 when the canonical orientation of bonds[k] runs from the
    right side of the half-line to its left side, -1 otherwise. tails/heads
    give the same pairs oriented right to left.
    """
    bonds: np.ndarray
    signs: np.ndarray
    tails: np.ndarray
    heads: np.ndarray


def crossing_bonds(half_line: HalfLine, complex_: LatticeComplex) -> Crossings:
    """All bonds whose segment meets the open half-line transversally."""
    O = half_line.origin3
    D = np.asarray(half_line.direction.as_tuple(), dtype=np.int64)
    P = 3 * complex_.nodes[complex_.bond_tail]
    Q = 3 * complex_.nodes[complex_.bond_head]
    side_p = lattice_wedge(D, P - O)
    side_q = lattice_wedge(D, Q - O)
    PQ = Q - P
    num = lattice_wedge(P - O, PQ)
    den = lattice_wedge(D, PQ)

    on_line = (side_p == 0) | (side_q == 0)
    if np.any(on_line):
        # a node on the ray itself leaves the crossing side undefined
        nodes3 = 3 * complex_.nodes
        rel = nodes3 - O
        ahead = (lattice_wedge(D, rel) == 0) & (rel @ D >= 0)
        if np.any(ahead):
            raise CrossingOrientationError(f"Lattice node lies on the half-line from {half_line.triangle}")

    crossing = (side_p * side_q < 0) & (num * den > 0)
    bonds = np.nonzero(crossing)[0]
    signs = np.where(den[bonds] > 0, 1, -1).astype(np.int64)
    tails = np.where(signs > 0, complex_.bond_tail[bonds], complex_.bond_head[bonds])
    heads = np.where(signs > 0, complex_.bond_head[bonds], complex_.bond_tail[bonds])
    return Crossings(bonds, signs, tails, heads)


def slip_along_half_lines(complex_: LatticeComplex, atoms: Sequence[Tuple[int, LatticeVector]],
                          directions: Optional[Sequence[LatticeVector]] = None) -> Tuple[SlipField, List[HalfLine]]:
    """Sum of the half-line slips of every atom (triangle index, lattice weight).

    Raises:
        HalfLineObstructedError: a half-line crosses an edge of another atom's triangle.
    """
    values = np.zeros((complex_.n_bonds, 2), dtype=np.int64)
    charged = np.array([k for k, _ in atoms], dtype=np.int64)
    half_lines = []
    for n, (k, w) in enumerate(atoms):
        t = complex_.triangle_id(int(k))
        direction = directions[n] if directions is not None else cut_direction(w)
        line = HalfLine(t, direction, complex_.epsilon)
        cut = crossing_bonds(line, complex_)
        others = charged[charged != k]
        if len(others):
            blocked = np.intersect1d(cut.bonds, complex_.tri_bonds[others].ravel())
            if len(blocked):
                hit = int(complex_.bond_triangles[blocked[0]][np.isin(complex_.bond_triangles[blocked[0]], others)][0])
                raise HalfLineObstructedError(
                    f"Half-line from {t} along {direction.as_tuple()} crosses charged triangle {complex_.triangle_id(hit)}"
                )
        np.add.at(values, cut.bonds, -cut.signs[:, None] * np.asarray(_pq(w), dtype=np.int64))
        half_lines.append(line)
        logger.debug(f"Half-line from {t} along {direction.as_tuple()}: {len(cut.bonds)} crossing bonds")
    return SlipField(complex_, values), half_lines


def representative_slip(mu: DislocationMeasure, complex_: Optional[LatticeComplex] = None) -> SlipField:
    """Slip supported on half-line cuts with dislocation measure exactly mu."""
    cx = complex_ if complex_ is not None else mu.complex
    if mu.is_empty:
        return SlipField.zeros(cx)
    atoms = [(int(k), LatticeVector(int(w[0]), int(w[1]))) for k, w in zip(mu.triangles, mu.weights)]
    sigma, _ = slip_along_half_lines(cx, atoms)
    return sigma


@dataclass(frozen=True, eq=False)
class RecoveryPair:
    displacement: DisplacementField
    slip: SlipField
    measure: DislocationMeasure
    half_lines: List[HalfLine]
    snapped: List[TriangleId]


def _as_dislocation(target) -> Dislocation:
    if isinstance(target, Dislocation):
        return target
    b, x = target
    return Dislocation.from_spec(_pq(b), x)


def build_recovery_pair(targets: Iterable, complex_: LatticeComplex) -> RecoveryPair:
    """Recovery displacement and slip for unit dislocations b^k at points x^k.

    Args:
        targets: Dislocation objects or (b, x) pairs, b a unit lattice vector.
        complex_: lattice complex.

    Returns:
        RecoveryPair with the snapped measure eps * sum b^k delta_{x^k_eps}.

    Raises:
        AdmissibilityError: non-unit b, two targets snapping to the same
            triangle, or mild separation failing after snapping.
        HalfLineObstructedError: a cut runs into another dislocation.
    """
    dislocations = [_as_dislocation(t) for t in targets]
    cx = complex_
    if not dislocations:
        return RecoveryPair(DisplacementField.zeros(cx), SlipField.zeros(cx), DislocationMeasure.empty(cx), [], [])

    snapped = []
    for d in dislocations:
        if not BurgersVector(d.burgers.p, d.burgers.q).is_unit:
            raise AdmissibilityError(f"Recovery needs unit Burgers vectors, got {d.burgers.as_tuple()}")
        snapped.append(snap_to_barycenter(d.position, cx))
    if len(set(snapped)) != len(snapped):
        raise AdmissibilityError("Two dislocations snap to the same triangle; use a smaller epsilon")

    atoms = {t: d.burgers.as_tuple() for t, d in zip(snapped, dislocations)}
    measure = DislocationMeasure.from_atoms(cx, atoms)
    if not check_mild_separation(measure):
        raise AdmissibilityError("Snapped dislocations violate mild separation; use a smaller epsilon")

    atom_list = [(cx.triangle_index(t), LatticeVector(d.burgers.p, d.burgers.q)) for t, d in zip(snapped, dislocations)]
    sigma, half_lines = slip_along_half_lines(cx, atom_list)

    u = np.zeros((cx.n_nodes, 2))
    for line, d in zip(half_lines, dislocations):
        u += cx.epsilon * displacement_singular(d.burgers, cx.positions - line.origin, cut_angle=line.angle)
    u -= u[0]

    logger.info(f"Recovery pair at eps={cx.epsilon:g}: {len(dislocations)} dislocations, "
                f"{len(sigma.support())} slipped bonds")
    return RecoveryPair(DisplacementField(cx, u), sigma, measure, half_lines, snapped)
