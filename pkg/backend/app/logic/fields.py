"""Slip fields, displacement fields and dislocation measures on a lattice complex."""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import numpy as np

from app.logic.errors import MissingBondError
from app.logic.lattice import (
    LATTICE_BASIS_INV,
    LatticeComplex,
    LatticeVector,
    TriangleId,
    lattice_to_physical,
    lattice_wedge,
)
from app.logic.measures import AtomicMeasure

logger = logging.getLogger(__name__)


class SlipField:
    """Integer lattice slip on the bonds of a complex.

    values[k] holds (p, q) for bond k in its canonical orientation; the
    reversed pair reads -values[k], so antisymmetry is exact by construction.
    Physical slip is eps * (p e1 + q nu).
    """

    def __init__(self, complex_: LatticeComplex, values=None):
        self.complex = complex_
        if values is None:
            values = np.zeros((complex_.n_bonds, 2), dtype=np.int64)
        values = np.array(values)
        if values.shape != (complex_.n_bonds, 2):
            raise ValueError(f"Slip values must have shape ({complex_.n_bonds}, 2), got {values.shape}")
        if not np.issubdtype(values.dtype, np.integer):
            rounded = np.rint(values)
            if not np.array_equal(rounded, values):
                raise ValueError("Slip values must be integer lattice coordinates")
            values = rounded
        self.values = values.astype(np.int64)
        self.values.setflags(write=False)

    @classmethod
    def zeros(cls, complex_: LatticeComplex):
        return cls(complex_)

    def value(self, i: int, j: int) -> LatticeVector:
        bond, sign = self.complex.find_bond(i, j)
        p, q = sign * self.values[bond]
        return LatticeVector(int(p), int(q))

    def physical(self) -> np.ndarray:
        """Slip vectors in the plane on canonical bonds, shape (n_bonds, 2)."""
        return self.complex.epsilon * lattice_to_physical(self.values)

    def support(self) -> np.ndarray:
        return np.nonzero(np.any(self.values != 0, axis=1))[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def _check(self, other):
        if other.complex is not self.complex:
            raise ValueError("Slip fields live on different complexes")

    def __add__(self, other):
        self._check(other)
        return SlipField(self.complex, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return SlipField(self.complex, self.values - other.values)

    def __neg__(self):
        return SlipField(self.complex, -self.values)

    def __eq__(self, other):
        return (isinstance(other, SlipField) and other.complex is self.complex
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self) -> str:
        return f"SlipField(nonzero_bonds={len(self.support())}, complex={self.complex!r})"


class DisplacementField:
    """Real 2-vector per node of a complex."""

    def __init__(self, complex_: LatticeComplex, values):
        values = np.array(values, dtype=float)
        if values.shape != (complex_.n_nodes, 2):
            raise ValueError(f"Displacement values must have shape ({complex_.n_nodes}, 2), got {values.shape}")
        self.complex = complex_
        self.values = values
        self.values.setflags(write=False)

    @classmethod
    def zeros(cls, complex_: LatticeComplex):
        return cls(complex_, np.zeros((complex_.n_nodes, 2)))

    @classmethod
    def from_function(cls, complex_: LatticeComplex, fn):
        """fn maps the (n_nodes, 2) position array to (n_nodes, 2) values."""
        return cls(complex_, fn(complex_.positions))

    def differences(self) -> np.ndarray:
        """du(i, j) = u(j) - u(i) on canonical bonds."""
        return self.values[self.complex.bond_head] - self.values[self.complex.bond_tail]

    def __add__(self, other):
        return DisplacementField(self.complex, self.values + other.values)

    def __sub__(self, other):
        return DisplacementField(self.complex, self.values - other.values)

    def scaled(self, factor: float):
        return DisplacementField(self.complex, factor * self.values)


@dataclass(frozen=True, eq=False)
class DislocationMeasure:
    """Atoms at triangle barycenters with integer lattice weights.

    With epsilon_scaled the physical weight of an atom is eps * (p e1 + q nu),
    which is what mu[sigma] produces.
    """
    complex: LatticeComplex
    triangles: np.ndarray
    weights: np.ndarray
    epsilon_scaled: bool = True
    _lookup: Dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.int64).reshape(-1, 2)
        if len(tris) != len(weights):
            raise ValueError("Triangles and weights must have the same length")
        if len(np.unique(tris)) != len(tris):
            raise ValueError("Duplicate triangle in dislocation measure")
        keep = np.any(weights != 0, axis=1)
        tris, weights = tris[keep], weights[keep]
        order = np.argsort(tris)
        tris, weights = tris[order], weights[order]
        tris.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_lookup", {int(t): k for k, t in enumerate(tris)})

    @classmethod
    def empty(cls, complex_: LatticeComplex):
        return cls(complex_, np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64))

    @classmethod
    def from_atoms(cls, complex_: LatticeComplex, atoms: Dict[TriangleId, Union[LatticeVector, tuple]]):
        tris = [complex_.triangle_index(t) for t in atoms]
        weights = [w.as_tuple() if isinstance(w, LatticeVector) else tuple(w) for w in atoms.values()]
        return cls(complex_, np.array(tris, dtype=np.int64), np.array(weights, dtype=np.int64).reshape(-1, 2))

    def atoms(self) -> Dict[TriangleId, LatticeVector]:
        return {self.complex.triangle_id(int(t)): LatticeVector(int(w[0]), int(w[1]))
                for t, w in zip(self.triangles, self.weights)}

    def weight(self, t: TriangleId) -> LatticeVector:
        k = self._lookup.get(self.complex.triangle_index(t))
        if k is None:
            return LatticeVector(0, 0)
        return LatticeVector(int(self.weights[k, 0]), int(self.weights[k, 1]))

    @property
    def barycenters(self) -> np.ndarray:
        return self.complex.barycenters[self.triangles]

    def physical_weights(self) -> np.ndarray:
        scale = self.complex.epsilon if self.epsilon_scaled else 1.0
        return scale * lattice_to_physical(self.weights)

    def total_burgers(self) -> LatticeVector:
        p, q = self.weights.sum(axis=0) if len(self.weights) else (0, 0)
        return LatticeVector(int(p), int(q))

    def to_atomic(self, divide_by_epsilon: bool = True):
        """AtomicMeasure at the barycenters; mu/eps when divide_by_epsilon."""
        weights = self.physical_weights()
        if divide_by_epsilon and self.epsilon_scaled:
            weights = weights / self.complex.epsilon
        return AtomicMeasure(self.barycenters, weights, self.complex.domain)

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def __eq__(self, other):
        return (isinstance(other, DislocationMeasure) and other.complex is self.complex
                and self.epsilon_scaled == other.epsilon_scaled
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    def __repr__(self) -> str:
        atoms = ", ".join(f"{t}: {w.as_tuple()}" for t, w in list(self.atoms().items())[:5])
        more = "" if len(self) <= 5 else f", ... ({len(self)} atoms)"
        return f"DislocationMeasure({{{atoms}{more}}})"


def _bond_values(V, complex_: Optional[LatticeComplex]):
    if isinstance(V, SlipField):
        return V.values, V.complex
    if complex_ is None:
        raise ValueError("A complex is required for plain bond arrays")
    V = np.asarray(V)
    if V.shape != (complex_.n_bonds, 2):
        raise ValueError(f"Bond field must have shape ({complex_.n_bonds}, 2), got {V.shape}")
    return V, complex_


def circulations(V, complex_: Optional[LatticeComplex] = None) -> np.ndarray:
    """V(i,j) + V(j,k) + V(k,i) on every triangle, shape (n_triangles, 2).

    V is a SlipField (result in integer lattice coordinates) or an array of
    canonical-orientation bond values together with its complex.
    """
    values, cx = _bond_values(V, complex_)
    return np.einsum("tk,tkd->td", cx.tri_signs, values[cx.tri_bonds])


def circulation(V, t: TriangleId, complex_: Optional[LatticeComplex] = None):
    """Discrete circulation of V around the counterclockwise boundary of t.

    Returns a LatticeVector for slip fields and a 2-vector otherwise.
    """
    values, cx = _bond_values(V, complex_)
    try:
        k = cx.triangle_index(t)
    except MissingBondError as e:
        raise MissingBondError(f"Circulation undefined: {e}") from e
    total = (cx.tri_signs[k][:, None] * values[cx.tri_bonds[k]]).sum(axis=0)
    if isinstance(V, SlipField):
        return LatticeVector(int(total[0]), int(total[1]))
    return total


def dislocation_measure(sigma: SlipField) -> DislocationMeasure:
    """mu[sigma](T) = -circulation(sigma, T) at every barycenter (integer exact)."""
    circ = circulations(sigma)
    charged = np.nonzero(np.any(circ != 0, axis=1))[0]
    return DislocationMeasure(sigma.complex, charged, -circ[charged])


def dislocation_measure_from_strain(u: DisplacementField, sigma: SlipField) -> DislocationMeasure:
    """Recover mu[sigma] from the circulation of the elastic strain du - sigma.

    The circulation of du telescopes, so rounding the result back to lattice
    coordinates gives the same integer measure as dislocation_measure.
    """
    cx = sigma.complex
    strain = u.differences() - sigma.physical()
    circ = circulations(strain, cx) / cx.epsilon
    lattice = np.rint(circ @ LATTICE_BASIS_INV.T).astype(np.int64)
    charged = np.nonzero(np.any(lattice != 0, axis=1))[0]
    return DislocationMeasure(cx, charged, lattice[charged])


def check_mild_separation(mu: DislocationMeasure, complex_: Optional[LatticeComplex] = None) -> bool:
    """True iff no charged triangle touches the boundary of the complex and no two charged triangles touch."""
    cx = complex_ if complex_ is not None else mu.complex
    if mu.is_empty:
        return True
    verts = cx.tri_nodes[mu.triangles]
    if np.any(cx.boundary_nodes[verts]):
        return False
    per_node = np.bincount(verts.ravel(), minlength=cx.n_nodes)
    return bool(np.all(per_node[verts] == 1))


def _oriented_edge_steps(cx: LatticeComplex) -> np.ndarray:
    """Index-space edge vectors of every triangle along its counterclockwise boundary, (T, 3, 2)."""
    return cx.tri_signs[..., None] * cx.bond_steps[cx.tri_bonds]


def volume_constraint_mask(sigma: SlipField) -> np.ndarray:
    """Per-triangle status of the linearized volume constraint.

    For each counterclockwise triple (i, j, k) the test is
    sigma(i,k) ^ (j-i) - sigma(i,j) ^ (k-i) = 0, evaluated in integer lattice
    coordinates (the common factor eps^2 sqrt(3)/2 is dropped).
    """
    cx = sigma.complex
    s = cx.tri_signs[..., None] * sigma.values[cx.tri_bonds]
    d = _oriented_edge_steps(cx)
    ok = np.ones(cx.n_triangles, dtype=bool)
    # edge a runs i->j, edge c runs k->i; sigma(i,k) = -s_c and k - i = -d_c
    for a, c in ((0, 2), (1, 0), (2, 1)):
        expr = lattice_wedge(-s[:, c], d[:, a]) - lattice_wedge(s[:, a], -d[:, c])
        ok &= expr == 0
    return ok


def check_volume_constraint(sigma: SlipField, t: TriangleId) -> bool:
    k = sigma.complex.triangle_index(t)
    return bool(volume_constraint_mask(sigma)[k])


def gauge_transform(sigma: SlipField, psi) -> SlipField:
    """sigma'(i,j) = sigma(i,j) + psi(j) - psi(i) for an integer node field psi of shape (n_nodes, 2)."""
    cx = sigma.complex
    psi = np.asarray(psi)
    if psi.shape != (cx.n_nodes, 2):
        raise ValueError(f"Gauge field must have shape ({cx.n_nodes}, 2), got {psi.shape}")
    if not np.issubdtype(psi.dtype, np.integer):
        raise ValueError("Gauge field must be integer valued")
    return SlipField(cx, sigma.values + psi[cx.bond_head] - psi[cx.bond_tail])


def affine_slip(complex_: LatticeComplex, z) -> SlipField:
    """sigma(i,j) = z(j - i) for an integer 2x2 matrix acting on lattice coordinates."""
    z = np.asarray(z)
    if z.shape != (2, 2) or not np.issubdtype(z.dtype, np.integer):
        raise ValueError("Affine slip needs an integer 2x2 matrix")
    return SlipField(complex_, complex_.bond_steps @ z.T)


def counter_ms_slip(complex_: LatticeComplex) -> SlipField:
    """sqrt(3) eps e2 = eps(-e1 + 2 nu) on every e1 bond; every triangle ends up charged."""
    values = np.zeros((complex_.n_bonds, 2), dtype=np.int64)
    values[complex_.bond_dir == 0] = (-1, 2)
    return SlipField(complex_, values)


def crack_pair(complex_: LatticeComplex, sign: int = 1):
    """Rigid opening of the lower half: u = sign*eps*nu where i2 <= 0, sigma = du."""
    if sign not in (1, -1):
        raise ValueError(f"Crack sign must be +1 or -1, got {sign}")
    lower = (complex_.nodes[:, 1] <= 0).astype(np.int64)
    u = DisplacementField(complex_, sign * complex_.epsilon * np.outer(lower, lattice_to_physical([0, 1])))
    jump = lower[complex_.bond_head] - lower[complex_.bond_tail]
    sigma = SlipField(complex_, sign * np.outer(jump, [0, 1]))
    return u, sigma


def dilation_pair(complex_: LatticeComplex, lam: int = 1):
    """u(i) = lam * i and sigma(i,j) = lam (j - i); integer lam keeps sigma lattice valued."""
    if int(lam) != lam:
        raise ValueError(f"Dilation factor must be an integer, got {lam}")
    lam = int(lam)
    u = DisplacementField(complex_, lam * complex_.positions)
    sigma = affine_slip(complex_, lam * np.eye(2, dtype=np.int64))
    return u, sigma
