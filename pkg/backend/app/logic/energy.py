"""Harmonic bond energy, its localizations, and the piecewise constant strain.

energy(u, sigma) = 1/(2 eps^2) * sum over ordered nearest-neighbour pairs of
[(du - sigma)(i,j) . (j - i)]^2. Every unordered bond appears twice in that
sum, so in terms of the unit bond direction t it equals
sum over bonds of ((du - sigma) . t)^2.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from app.logic.errors import ChargedTriangleError, LoopError
from app.logic.fields import DislocationMeasure, DisplacementField, SlipField, circulations
from app.logic.lattice import (
    BOND_UNITS,
    SQRT3,
    LatticeComplex,
    TriangleId,
    lattice_to_physical,
    lattice_wedge,
)

logger = logging.getLogger(__name__)


class ElasticTensor:
    """Isotropic elasticity with both Lame parameters equal to 1."""

    @staticmethod
    def stress(beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        tr = np.trace(beta, axis1=-2, axis2=-1)
        sym = 0.5 * (beta + np.swapaxes(beta, -1, -2))
        return tr[..., None, None] * np.eye(2) + 2.0 * sym

    @staticmethod
    def density(beta) -> np.ndarray:
        """C beta : beta = |tr beta|^2 + 2 |beta_sym|^2."""
        beta = np.asarray(beta, dtype=float)
        tr = np.trace(beta, axis1=-2, axis2=-1)
        sym = 0.5 * (beta + np.swapaxes(beta, -1, -2))
        return tr ** 2 + 2.0 * np.sum(sym ** 2, axis=(-2, -1))


def _region_mask(region, n_bonds: int) -> np.ndarray:
    if region is None:
        return np.ones(n_bonds, dtype=bool)
    region = np.asarray(region)
    if region.dtype == bool:
        if region.shape != (n_bonds,):
            raise ValueError(f"Region mask must have shape ({n_bonds},)")
        return region
    mask = np.zeros(n_bonds, dtype=bool)
    mask[region] = True
    return mask


def bond_residuals(u: DisplacementField, sigma: Optional[SlipField] = None) -> np.ndarray:
    """(du - sigma) . t on every canonical bond, t the unit bond direction."""
    cx = u.complex
    strain = u.differences()
    if sigma is not None:
        strain = strain - sigma.physical()
    return np.einsum("kd,kd->k", strain, cx.bond_units)


def energy(u: DisplacementField, sigma: Optional[SlipField] = None, region=None) -> float:
    """F_eps(u, sigma; A) for a set of bonds A (mask or bond ids); both orientations of each bond count."""
    r = bond_residuals(u, sigma)
    mask = _region_mask(region, len(r))
    return float(np.sum(r[mask] ** 2))


def triangle_energy(u: DisplacementField, sigma: Optional[SlipField], t: TriangleId) -> float:
    """Energy of the six ordered pairs of one triangle."""
    k = u.complex.triangle_index(t)
    return energy(u, sigma, u.complex.tri_bonds[k])


def triangle_energy_of_constant_strain(beta, epsilon: float) -> np.ndarray:
    """eps^2 (|e1.beta e1|^2 + |nu.beta nu|^2 + |eta.beta eta|^2), which equals 3/8 eps^2 C beta : beta."""
    beta = np.asarray(beta, dtype=float)
    total = 0.0
    for d in BOND_UNITS:
        total = total + np.einsum("i,...ij,j->...", d, beta, d) ** 2
    return epsilon ** 2 * total


@dataclass(frozen=True, eq=False)
class TriangleStrainField:
    """Constant 2x2 strain on each triangle of a dislocation-free set."""
    complex: LatticeComplex
    triangles: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        lookup = -np.ones(self.complex.n_triangles, dtype=np.int64)
        lookup[self.triangles] = np.arange(len(self.triangles))
        object.__setattr__(self, "_position", lookup)

    def __len__(self) -> int:
        return len(self.triangles)

    def contains(self, k) -> np.ndarray:
        return self._position[np.asarray(k)] >= 0

    def beta(self, t: TriangleId) -> np.ndarray:
        pos = self._position[self.complex.triangle_index(t)]
        if pos < 0:
            raise KeyError(f"No strain stored for {t}")
        return self.betas[pos]


def dislocation_free_triangles(sigma: SlipField) -> np.ndarray:
    circ = circulations(sigma)
    return np.nonzero(np.all(circ == 0, axis=1))[0]


def reconstruct_strain(u: DisplacementField, sigma: SlipField, triangles=None) -> TriangleStrainField:
    """Constant strain beta_T with beta_T (j - i) = du(i,j) - sigma(i,j) on each edge.

    Solves the two edges leaving the first vertex and checks the third one.

    Args:
        u: displacement.
        sigma: slip.
        triangles: indices of a dislocation-free set; defaults to all of them.

    Raises:
        ChargedTriangleError: a triangle of the set carries nonzero circulation.
    """
    cx = sigma.complex
    if triangles is None:
        triangles = dislocation_free_triangles(sigma)
    triangles = np.asarray(triangles, dtype=np.int64)

    circ = circulations(sigma)[triangles]
    bad = np.nonzero(np.any(circ != 0, axis=1))[0]
    if len(bad):
        k = int(triangles[bad[0]])
        raise ChargedTriangleError(cx.triangle_id(k), cx.epsilon * lattice_to_physical(circ[bad[0]]))

    w_bond = u.differences() - sigma.physical()
    signs = cx.tri_signs[triangles]
    bonds = cx.tri_bonds[triangles]
    # oriented edge values along v0->v1, v1->v2, v2->v0
    w = signs[..., None] * w_bond[bonds]
    verts = cx.positions[cx.tri_nodes[triangles]]
    e01 = verts[:, 1] - verts[:, 0]
    e02 = verts[:, 2] - verts[:, 0]
    E = np.stack([e01, e02], axis=-1)
    W = np.stack([w[:, 0], -w[:, 2]], axis=-1)
    betas = np.swapaxes(np.linalg.solve(np.swapaxes(E, -1, -2), np.swapaxes(W, -1, -2)), -1, -2)

    if len(triangles):
        e12 = verts[:, 2] - verts[:, 1]
        residual = np.linalg.norm(np.einsum("tij,tj->ti", betas, e12) - w[:, 1], axis=1)
        scale = max(float(np.abs(w).max()), np.finfo(float).tiny)
        worst = int(np.argmax(residual))
        if residual[worst] > 1e-10 * scale:
            raise ChargedTriangleError(cx.triangle_id(int(triangles[worst])))

    return TriangleStrainField(cx, triangles, betas)


class PoincareTerms(NamedTuple):
    localized: float
    bulk: float
    boundary: float


def poincare_terms(u: DisplacementField, sigma: SlipField, strain: TriangleStrainField) -> PoincareTerms:
    """Both sides of F(u, sigma; K) = sqrt(3)/2 int_K 1/2 C beta:beta + 1/(4 eps^2) sum_boundary [...]^2.

    K is the union of the triangles of the strain field, its bonds are their
    edges, and boundary bonds are edges of exactly one of them.
    """
    cx = u.complex
    count = np.bincount(cx.tri_bonds[strain.triangles].ravel(), minlength=cx.n_bonds)
    r = bond_residuals(u, sigma)
    localized = float(np.sum(r[count >= 1] ** 2))
    bulk = float(np.sum(SQRT3 / 2.0 * cx.triangle_area * 0.5 * ElasticTensor.density(strain.betas)))
    boundary = float(0.5 * np.sum(r[count == 1] ** 2))
    return PoincareTerms(localized, bulk, boundary)


def loop_circulation_of_strain(strain: TriangleStrainField, loop: Sequence[int]) -> np.ndarray:
    """Sum of beta_T(e) applied to each edge vector of a closed node loop.

    Each edge must be an edge of a triangle carrying a strain value.
    """
    cx = strain.complex
    tails = np.asarray(loop, dtype=np.int64)
    if len(tails) < 3:
        raise LoopError("A loop needs at least three nodes")
    heads = np.roll(tails, -1)
    bonds, _ = cx.find_bonds(tails, heads)
    if np.any(bonds < 0):
        raise LoopError("Loop has consecutive nodes that are not nearest neighbours")
    tris = cx.bond_triangles[bonds]
    has = (tris >= 0) & strain.contains(np.where(tris >= 0, tris, 0))
    if not np.all(has.any(axis=1)):
        raise LoopError("Loop leaves the dislocation-free region")
    pick = np.where(has[:, 0], tris[:, 0], tris[:, 1])
    betas = strain.betas[strain._position[pick]]
    edges = cx.positions[heads] - cx.positions[tails]
    return np.einsum("kij,kj->i", betas, edges)


def winding_numbers(loop_points, points) -> np.ndarray:
    """Winding number of a closed polygon around each point (points off the polygon)."""
    poly = np.asarray(loop_points, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = poly[None, :, :] - pts[:, None, :]
    b = np.roll(poly, -1, axis=0)[None, :, :] - pts[:, None, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    up = (a[..., 1] <= 0) & (b[..., 1] > 0) & (cross > 0)
    down = (a[..., 1] > 0) & (b[..., 1] <= 0) & (cross < 0)
    return up.sum(axis=1) - down.sum(axis=1)


def enclosed_charge(mu: DislocationMeasure, loop: Sequence[int]) -> np.ndarray:
    """sum_T winding(loop, x_T) * mu(T) as a plane vector."""
    if mu.is_empty:
        return np.zeros(2)
    wind = winding_numbers(mu.complex.positions[np.asarray(loop)], mu.barycenters)
    return wind @ mu.physical_weights()


def nonlinear_energy(v, potential: Callable, epsilon: Optional[float] = None) -> float:
    """eps^2 * sum over ordered pairs of potential(|dv(i,j)| / eps) for a deformation v."""
    cx = v.complex
    eps = cx.epsilon if epsilon is None else epsilon
    lengths = np.linalg.norm(v.differences(), axis=1)
    return float(2.0 * eps ** 2 * np.sum(potential(lengths / eps)))


def rescaled_nonlinear_energy(u: DisplacementField, potential: Callable, delta: float) -> float:
    """E^delta(x + delta u) = E(x + delta u) / delta^2."""
    deformation = DisplacementField(u.complex, u.complex.positions + delta * u.values)
    return nonlinear_energy(deformation, potential) / delta ** 2


def linearized_energy(u: DisplacementField, second_derivative: float = 2.0) -> float:
    """psi''(1)/(2 eps^2) * sum over ordered pairs [du . (j - i)]^2 = psi''(1) * energy(u, 0)."""
    return second_derivative * energy(u)


@lru_cache(maxsize=None)
def _feasible_slips(up: bool, box: int) -> np.ndarray:
    """All lattice slips (s01, s12, s20) along a counterclockwise boundary satisfying the volume constraint.

    Returned as (n, 3, 2) integer arrays in oriented-edge order.
    """
    if up:
        d = np.array([[1, 0], [-1, 1], [0, -1]])
    else:
        d = np.array([[1, -1], [0, 1], [-1, 0]])
    r = np.arange(-box, box + 1)
    p0, q0, p1, q1 = np.meshgrid(r, r, r, r, indexing="ij")
    s0 = np.stack([p0.ravel(), q0.ravel()], axis=1)
    s1 = np.stack([p1.ravel(), q1.ravel()], axis=1)
    s2 = -s0 - s1
    keep = np.all(np.abs(s2) <= box, axis=1)
    s = np.stack([s0, s1, s2], axis=1)[keep]
    ok = np.ones(len(s), dtype=bool)
    for a, c in ((0, 2), (1, 0), (2, 1)):
        ok &= lattice_wedge(-s[:, c], d[a]) - lattice_wedge(s[:, a], -d[c]) == 0
    return s[ok]


def constrained_minima(u: DisplacementField, triangles, box: int = 3) -> np.ndarray:
    """Per-triangle min of F(u, sigma; T) over circulation-free lattice slips obeying the volume constraint.

    Every edge slip is restricted to |p|, |q| <= box.
    """
    cx = u.complex
    triangles = np.asarray(triangles, dtype=np.int64)
    out = np.empty(len(triangles))
    diffs = u.differences()
    for up in (True, False):
        sel = np.nonzero(cx.tri_up[triangles] == up)[0]
        if not len(sel):
            continue
        tris = triangles[sel]
        slips = cx.epsilon * lattice_to_physical(_feasible_slips(up, box))
        signs = cx.tri_signs[tris][..., None]
        bonds = cx.tri_bonds[tris]
        du = signs * diffs[bonds]
        units = signs * cx.bond_units[bonds]
        # r[t, n, k] = (du - sigma_n) . t on edge k of triangle t
        r = np.einsum("tkd,tkd->tk", du, units)[:, None, :] - np.einsum("nkd,tkd->tnk", slips, units)
        out[sel] = np.min(np.sum(r ** 2, axis=2), axis=1)
    return out


def constrained_triangle_minimum(u: DisplacementField, t: TriangleId, box: int = 3) -> float:
    """min F(u, sigma; T) over lattice slips on T obeying the volume constraint, |p|,|q| <= box per edge."""
    k = u.complex.triangle_index(t)
    return float(constrained_minima(u, [k], box)[0])


def strained_triangles(u: DisplacementField, atol: float = 0.0) -> np.ndarray:
    """Triangles on which du is nonzero on some edge."""
    cx = u.complex
    moved = np.any(np.abs(u.differences()) > atol, axis=1)
    return np.nonzero(moved[cx.tri_bonds].any(axis=1))[0]
