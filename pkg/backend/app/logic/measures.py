"""Vector-valued atomic measures: total variation and flat norm."""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog, minimize_scalar
from scipy.sparse import coo_matrix
from scipy.spatial import Delaunay

from app.logic.errors import FlatNormError
from app.logic.lattice import ConvexPolygon

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite sum of R^2-weighted Dirac masses, optionally tied to a domain.

    Atoms sharing a location are merged and zero atoms are dropped.
    """
    points: np.ndarray
    weights: np.ndarray
    domain: Optional[ConvexPolygon] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1, 2)
        if len(pts) != len(w):
            raise ValueError("Points and weights must have the same length")
        if len(pts):
            pts, inverse = np.unique(pts, axis=0, return_inverse=True)
            merged = np.zeros((len(pts), 2))
            np.add.at(merged, np.asarray(inverse).reshape(-1), w)
            keep = np.any(merged != 0, axis=1)
            pts, w = pts[keep], merged[keep]
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, point, weight, domain: Optional[ConvexPolygon] = None):
        return cls(np.asarray(point, dtype=float).reshape(1, 2), np.asarray(weight, dtype=float).reshape(1, 2), domain)

    def __len__(self) -> int:
        return len(self.points)

    def _domain_with(self, other):
        return self.domain if self.domain is not None else other.domain

    def __add__(self, other):
        return AtomicMeasure(np.vstack([self.points, other.points]),
                             np.vstack([self.weights, other.weights]), self._domain_with(other))

    def __neg__(self):
        return AtomicMeasure(self.points, -self.weights, self.domain)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, factor: float):
        return AtomicMeasure(self.points, factor * self.weights, self.domain)

    __rmul__ = __mul__


class FlatNormResult(NamedTuple):
    value: float
    direction: np.ndarray
    estimated: bool


def total_variation(mu: AtomicMeasure) -> float:
    """Sum of the Euclidean norms of the atom weights."""
    return float(np.linalg.norm(mu.weights, axis=1).sum())


def _lipschitz_pairs(points: np.ndarray, exact_atom_limit: int):
    n = len(points)
    if n <= exact_atom_limit or n < 4:
        i, j = np.triu_indices(n, k=1)
        return i, j, False
    tri = Delaunay(points)
    edges = np.vstack([tri.simplices[:, [0, 1]], tri.simplices[:, [1, 2]], tri.simplices[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    return edges[:, 0], edges[:, 1], True


def _directional_lp(coeffs, dist, pair_i, pair_j, pair_len) -> float:
    """max sum c_k phi_k subject to |phi| <= alpha, |phi_k| <= lam*dist_k, Lip(phi) <= lam, alpha + lam <= 1."""
    n = len(coeffs)
    m = len(pair_i)
    ia, il = n, n + 1
    rows, cols, vals = [], [], []
    r = 0
    k = np.arange(n)
    for sgn in (1.0, -1.0):
        # sgn*phi_k - alpha <= 0
        rows += [r + k, r + k]
        cols += [k, np.full(n, ia)]
        vals += [np.full(n, sgn), np.full(n, -1.0)]
        r += n
        # sgn*phi_k - dist_k*lam <= 0
        rows += [r + k, r + k]
        cols += [k, np.full(n, il)]
        vals += [np.full(n, sgn), -dist]
        r += n
    e = np.arange(m)
    for sgn in (1.0, -1.0):
        # sgn*(phi_i - phi_j) - |x_i - x_j| lam <= 0
        rows += [r + e, r + e, r + e]
        cols += [pair_i, pair_j, np.full(m, il)]
        vals += [np.full(m, sgn), np.full(m, -sgn), -pair_len]
        r += m
    rows += [np.array([r, r])]
    cols += [np.array([ia, il])]
    vals += [np.array([1.0, 1.0])]
    r += 1
    A_ub = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, n + 2)).tocsr()
    b_ub = np.zeros(r)
    b_ub[-1] = 1.0
    c = np.concatenate([-np.asarray(coeffs, dtype=float), [0.0, 0.0]])
    bounds = [(None, None)] * n + [(0, None), (0, None)]

    result = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not result.success:
        raise FlatNormError(f"Flat norm LP failed: {result.message}")
    return float(-result.fun)


def flat_norm_details(mu: AtomicMeasure, n_directions: int = 720, exact_atom_limit: int = 200) -> FlatNormResult:
    """Flat norm of an R^2-valued atomic measure on a convex domain.

    The supremum over vector test functions reduces to a supremum over unit
    directions d of a scalar LP with weights w_k . d. When all weights are
    parallel that direction is used alone; otherwise a uniform sweep over
    [0, pi) is refined with a bounded scalar search around its best angle.

    Args:
        mu: measure with atoms strictly inside mu.domain.
        n_directions: sweep resolution for non-parallel weights.
        exact_atom_limit: above this many atoms the Lipschitz constraints are
            restricted to Delaunay edges; the value is then an upper estimate.

    Returns:
        FlatNormResult(value, direction, estimated)
    """
    if mu.domain is None:
        raise FlatNormError("Flat norm needs the measure's domain")
    if len(mu) == 0:
        return FlatNormResult(0.0, np.array([1.0, 0.0]), False)
    dist = mu.domain.distance_to_boundary(mu.points)
    if np.any(dist <= 0):
        raise FlatNormError("Atom on or outside the domain boundary")

    pair_i, pair_j, estimated = _lipschitz_pairs(mu.points, exact_atom_limit)
    pair_len = np.linalg.norm(mu.points[pair_i] - mu.points[pair_j], axis=1)
    if estimated:
        logger.info(f"Flat norm of {len(mu)} atoms: Lipschitz constraints on {len(pair_i)} Delaunay edges")

    def value_at(theta: float) -> float:
        d = np.array([np.cos(theta), np.sin(theta)])
        return _directional_lp(mu.weights @ d, dist, pair_i, pair_j, pair_len)

    norms = np.linalg.norm(mu.weights, axis=1)
    ref = mu.weights[np.argmax(norms)] / norms.max()
    cross = mu.weights[:, 0] * ref[1] - mu.weights[:, 1] * ref[0]
    if np.all(np.abs(cross) <= 1e-12 * norms.max()):
        theta = float(np.arctan2(ref[1], ref[0]))
        return FlatNormResult(value_at(theta), ref, estimated)

    thetas = np.arange(n_directions) * np.pi / n_directions
    values = np.array([value_at(t) for t in thetas])
    best = int(np.argmax(values))
    step = np.pi / n_directions
    refined = minimize_scalar(lambda t: -value_at(t), bounds=(thetas[best] - step, thetas[best] + step),
                              method="bounded", options={"xatol": 1e-10})
    theta, value = thetas[best], values[best]
    if refined.success and -refined.fun > value:
        theta, value = float(refined.x), float(-refined.fun)
    return FlatNormResult(float(value), np.array([np.cos(theta), np.sin(theta)]), estimated)


def flat_norm(mu: AtomicMeasure, n_directions: int = 720, exact_atom_limit: int = 200) -> float:
    """sup { sum_k phi(x_k) . w_k : ||phi||_inf + Lip(phi) <= 1, phi = 0 on the boundary }."""
    return flat_norm_details(mu, n_directions=n_directions, exact_atom_limit=exact_atom_limit).value


def korn_ratio(mu: AtomicMeasure, energy: float, epsilon: float) -> float:
    """|mu/eps|(Omega) * eps^2 / F; bounded along a sequence with energy of order eps^2 |log eps|."""
    if energy <= 0:
        return float("inf")
    return total_variation(mu) * epsilon ** 2 / energy


def growth_exponent(xs, ys) -> float:
    """Slope of the least-squares line through (log x, log y)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)
