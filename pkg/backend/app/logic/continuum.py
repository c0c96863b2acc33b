"""Closed-form edge dislocation fields of the isotropic continuum limit.

Unit Lame parameters; b is a lattice vector. In polar coordinates around the
core the strain reads
    beta(x) = (1/rho) * [ f(theta) (x) (-sin, cos) + g (x) (cos, sin) ]
with g = -b_perp / (6 pi) and
    f(theta) = b/(2 pi) - 1/(3 pi) * (-b1 cos 2t - b2 sin 2t, b2 cos 2t - b1 sin 2t).
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.integrate import quad, quad_vec

from app.logic.energy import ElasticTensor
from app.logic.lattice import SQRT3, LatticeVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BurgersVector(LatticeVector):
    """Lattice vector used as the Burgers vector of a dislocation."""

    @property
    def is_unit(self) -> bool:
        return self.norm_squared == 1


@dataclass(frozen=True)
class Dislocation:
    """One atom b * delta_x of a limit dislocation measure."""
    burgers: BurgersVector
    position: Tuple[float, float]

    @classmethod
    def from_spec(cls, b: Sequence[int], x: Sequence[float]):
        return cls(BurgersVector(int(b[0]), int(b[1])), (float(x[0]), float(x[1])))


def _as_lattice(b) -> LatticeVector:
    # plain sequences are lattice coordinates (p, q), never physical components
    return b if isinstance(b, LatticeVector) else LatticeVector.from_sequence(b)


def _as_vector(b) -> np.ndarray:
    return _as_lattice(b).vector


def g_constant(b) -> np.ndarray:
    """Radial coefficient g = -b_perp / (6 pi), b_perp = (-b2, b1)."""
    bv = _as_vector(b)
    return np.array([bv[1], -bv[0]]) / (6.0 * np.pi)


def f_angular(b, theta) -> np.ndarray:
    """Angular profile f(theta), shape (..., 2)."""
    b1, b2 = _as_vector(b)
    theta = np.asarray(theta, dtype=float)
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    f1 = b1 / (2 * np.pi) - (-b1 * c2 - b2 * s2) / (3 * np.pi)
    f2 = b2 / (2 * np.pi) - (b2 * c2 - b1 * s2) / (3 * np.pi)
    return np.stack([f1, f2], axis=-1)


def angular_antiderivative(b, theta) -> np.ndarray:
    """F(theta) = int_0^theta f; F(theta + 2 pi) = F(theta) + b."""
    b1, b2 = _as_vector(b)
    theta = np.asarray(theta, dtype=float)
    s2 = np.sin(2 * theta)
    one_minus_c2 = 1.0 - np.cos(2 * theta)
    F1 = b1 * theta / (2 * np.pi) + (b1 * s2 + b2 * one_minus_c2) / (6 * np.pi)
    F2 = b2 * theta / (2 * np.pi) + (-b2 * s2 + b1 * one_minus_c2) / (6 * np.pi)
    return np.stack([F1, F2], axis=-1)


def beta_singular(b, x) -> np.ndarray:
    """Strain of a dislocation at the origin evaluated at x (..., 2) -> (..., 2, 2).

    Raises ValueError at the core.
    """
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    if np.any(rho == 0):
        raise ValueError("Singular strain is undefined at the dislocation core")
    theta = np.arctan2(x[..., 1], x[..., 0])
    c, s = np.cos(theta), np.sin(theta)
    tangential = np.stack([-s, c], axis=-1)
    radial = np.stack([c, s], axis=-1)
    f = f_angular(b, theta)
    g = np.broadcast_to(g_constant(b), f.shape)
    beta = f[..., :, None] * tangential[..., None, :] + g[..., :, None] * radial[..., None, :]
    return beta / rho[..., None, None]


def displacement_singular(b, x, cut_angle: float = 0.0) -> np.ndarray:
    """Displacement with gradient beta_singular, jumping by b across the half-line at cut_angle.

    The angle is taken in [cut_angle, cut_angle + 2 pi); the additive constant
    is fixed by F(0) = 0 and log(1) = 0.
    """
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    if np.any(rho == 0):
        raise ValueError("Singular displacement is undefined at the dislocation core")
    theta = cut_angle + np.mod(np.arctan2(x[..., 1], x[..., 0]) - cut_angle, 2 * np.pi)
    return angular_antiderivative(b, theta) + np.log(rho)[..., None] * g_constant(b)


class SingularStrain:
    """Evaluator bundle for one Burgers vector."""

    def __init__(self, b):
        self.b = b

    def __call__(self, x) -> np.ndarray:
        return beta_singular(self.b, x)

    def displacement(self, x, cut_angle: float = 0.0) -> np.ndarray:
        return displacement_singular(self.b, x, cut_angle)

    def stress(self, x) -> np.ndarray:
        return ElasticTensor.stress(beta_singular(self.b, x))


def burgers_circulation(b, radius: float = 1.0) -> np.ndarray:
    """Line integral of beta along the counterclockwise circle of the given radius."""

    def integrand(theta):
        c, s = np.cos(theta), np.sin(theta)
        beta = beta_singular(b, radius * np.array([c, s]))
        return beta @ np.array([-s, c]) * radius

    value, _ = quad_vec(integrand, 0.0, 2 * np.pi, epsabs=1e-13, epsrel=1e-12)
    return value


def equilibrium_residual(b, x, h: float) -> np.ndarray:
    """Central-difference approximation of Div(C beta) at x with step h."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(2)
    for j in range(2):
        step = np.zeros(2)
        step[j] = h
        plus = ElasticTensor.stress(beta_singular(b, x + step))
        minus = ElasticTensor.stress(beta_singular(b, x - step))
        out += (plus[:, j] - minus[:, j]) / (2 * h)
    return out


def psi(b) -> float:
    """Self-energy coefficient |b|^2 / (3 pi)."""
    return _as_lattice(b).norm_squared / (3.0 * np.pi)


def psi_quadrature(b) -> float:
    """int_0^{2 pi} 1/2 C Gamma(theta) : Gamma(theta) with Gamma the strain on the unit circle."""

    def density(theta):
        gamma = beta_singular(b, np.array([np.cos(theta), np.sin(theta)]))
        return 0.5 * ElasticTensor.density(gamma)

    value, _ = quad(density, 0.0, 2 * np.pi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(value)


def lattice_decomposition(b) -> Tuple[int, int, int]:
    """(z1, z2, z3) with z1 e1 + z2 nu + z3 eta = b and minimal |z1| + |z2| + |z3|.

    With z1 = p + z3 and z2 = q - z3 only z3 is free; the optimum lies in
    [-(|p| + |q|), |p| + |q|]. Ties go to the smallest z3.
    """
    p, q = _as_lattice(b).as_tuple()
    bound = abs(p) + abs(q)
    z3 = np.arange(-bound, bound + 1)
    cost = np.abs(p + z3) + np.abs(q - z3) + np.abs(z3)
    best = int(z3[np.argmin(cost)])
    return p + best, q - best, best


def phi(b) -> float:
    """Relaxed self-energy density: min sum |z_i| over lattice decompositions, over 3 pi."""
    z = lattice_decomposition(b)
    return sum(abs(v) for v in z) / (3.0 * np.pi)


def phi_brute_force(b, bound: int = None) -> float:
    """Reference value of phi by exhaustive search over a cube of decompositions."""
    p, q = _as_lattice(b).as_tuple()
    n = bound if bound is not None else 2 * (abs(p) + abs(q)) + 1
    z = np.arange(-n, n + 1)
    z1, z2, z3 = np.meshgrid(z, z, z, indexing="ij")
    feasible = (z1 - z3 == p) & (z2 + z3 == q)
    cost = np.abs(z1) + np.abs(z2) + np.abs(z3)
    return float(cost[feasible].min()) / (3.0 * np.pi)


def predicted_limit(burgers: Iterable) -> float:
    """sqrt(3)/2 * sum phi(b^k): the limit of F_eps / (eps^2 |log eps|)."""
    return SQRT3 / 2.0 * sum(phi(b) for b in burgers)
