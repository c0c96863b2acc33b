"""Minimal energy of a dislocation measure.

On a simply connected complex two slips with the same dislocation measure
differ by an integer gauge field, and energy(u, sigma + d psi) equals
energy(u - eps*psi, sigma). The infimum over (u, sigma) therefore reduces to
a quadratic minimization over u for one representative slip, plus a small
search over bonds that bound no triangle (their slip is not tied to mu).
"""
import logging
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.sparse import csr_matrix, spmatrix

from app.logic.energy import energy
from app.logic.errors import AdmissibilityError, SolverDidNotConverge
from app.logic.fields import (
    DislocationMeasure,
    DisplacementField,
    SlipField,
    check_mild_separation,
    dislocation_measure,
)
from app.logic.lattice import LatticeComplex, lattice_to_physical
from app.logic.recovery import representative_slip

logger = logging.getLogger(__name__)

__all__ = [
    "QuadraticSystem",
    "MinimizationResult",
    "assemble_system",
    "conjugate_gradient",
    "minimize_displacement",
    "representative_slip",
    "solve_for_measure",
    "compute_F_of_mu",
]


@dataclass(frozen=True, eq=False)
class QuadraticSystem:
    """energy(u, sigma) = 1/2 u.A u - rhs.u + energy_offset on the flattened displacement (u0x, u0y, u1x, ...)."""
    operator: spmatrix
    rhs: np.ndarray
    energy_offset: float

    def energy(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.operator @ x) - self.rhs @ x + self.energy_offset)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.operator @ x - self.rhs


def _bond_matrix(cx: LatticeComplex, bonds: np.ndarray) -> csr_matrix:
    """Row k maps u to (u(head) - u(tail)) . t for bond bonds[k]."""
    m = len(bonds)
    t = cx.bond_units[bonds]
    tail = cx.bond_tail[bonds]
    head = cx.bond_head[bonds]
    rows = np.repeat(np.arange(m), 4)
    cols = np.column_stack([2 * tail, 2 * tail + 1, 2 * head, 2 * head + 1]).ravel()
    vals = np.column_stack([-t[:, 0], -t[:, 1], t[:, 0], t[:, 1]]).ravel()
    return csr_matrix((vals, (rows, cols)), shape=(m, 2 * cx.n_nodes))


def assemble_system(sigma: SlipField, complex_: Optional[LatticeComplex] = None, bond_mask=None) -> QuadraticSystem:
    """Normal equations of the bond energy restricted to the masked bonds."""
    cx = complex_ if complex_ is not None else sigma.complex
    if bond_mask is None:
        bonds = np.arange(cx.n_bonds)
    else:
        bond_mask = np.asarray(bond_mask)
        bonds = np.nonzero(bond_mask)[0] if bond_mask.dtype == bool else bond_mask.astype(np.int64)
    B = _bond_matrix(cx, bonds)
    s = np.einsum("kd,kd->k", sigma.physical()[bonds], cx.bond_units[bonds])
    A = (2.0 * (B.T @ B)).tocsr()
    rhs = 2.0 * (B.T @ s)
    return QuadraticSystem(A, rhs, float(s @ s))


def conjugate_gradient(A, b, tol: float = 1e-10, max_iter: int = 1000, x0=None):
    """Jacobi-preconditioned conjugate gradients for a consistent symmetric positive semidefinite system.

    Stops when the true residual satisfies |b - Ax| <= tol*|b|.

    Returns:
        (x, iterations, relative_residual)

    Raises:
        SolverDidNotConverge: max_iter reached; carries the best iterate.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    res0 = np.linalg.norm(b)
    if res0 < np.finfo(float).tiny:
        # zero right-hand side, the solution is zero
        return np.zeros_like(b), 0, 0.0

    diag = A.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    r = b - A @ x
    res = np.linalg.norm(r)
    if res / res0 <= tol:
        return x, 0, res / res0

    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    best_x, best_res = x.copy(), res
    counter = 0
    while True:
        counter += 1
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            # search direction fell into the kernel
            r = b - A @ x
            res = np.linalg.norm(r)
            if res / res0 <= tol:
                return x, counter, res / res0
            raise SolverDidNotConverge(best_x, best_res / res0, counter)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r)

        if res / res0 <= tol:
            # confirm against the true residual before stopping
            r = b - A @ x
            res = np.linalg.norm(r)
            if res / res0 <= tol:
                return x, counter, res / res0
        if res < best_res:
            best_x, best_res = x.copy(), res

        if counter >= max_iter:
            raise SolverDidNotConverge(best_x, best_res / res0, counter)

        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new


class MinimizationResult(NamedTuple):
    displacement: DisplacementField
    energy: float
    iterations: int
    relative_residual: float
    slip: SlipField


def minimize_displacement(sigma: SlipField, complex_: Optional[LatticeComplex] = None, tol: float = 1e-10,
                          max_iter_factor: int = 50, bond_mask=None) -> MinimizationResult:
    """min over u of energy(u, sigma) on the masked bonds.

    The minimizer is unique up to rigid infinitesimal motions; the returned
    one is whatever conjugate gradients reaches from zero.
    """
    cx = complex_ if complex_ is not None else sigma.complex
    system = assemble_system(sigma, cx, bond_mask)
    max_iter = max_iter_factor * 2 * cx.n_nodes
    start = time.time()
    x, iterations, relres = conjugate_gradient(system.operator, system.rhs, tol=tol, max_iter=max_iter)
    u = DisplacementField(cx, x.reshape(-1, 2))
    value = energy(u, sigma, bond_mask)
    logger.info(f"CG converged in {iterations} iterations (relres={relres:.2e}, "
                f"{2 * cx.n_nodes} unknowns, {time.time() - start:.2f}s): energy={value:.6e}")
    return MinimizationResult(u, value, iterations, relres, sigma)


def _best_dangling_slip(cx: LatticeComplex, u: DisplacementField, bonds: np.ndarray, box: int) -> np.ndarray:
    """Lattice slip in [-box, box]^2 minimizing each dangling bond's own term."""
    r = np.arange(-box, box + 1)
    cand = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    # ties go to the smallest slip
    order = np.lexsort((cand[:, 1], cand[:, 0], np.abs(cand).sum(axis=1)))
    cand = cand[order]
    phys = cx.epsilon * lattice_to_physical(cand)
    du = u.differences()[bonds]
    t = cx.bond_units[bonds]
    proj = np.einsum("kd,kd->k", du, t)[:, None] - phys @ t.T
    return cand[np.argmin(proj.T ** 2, axis=1)]


def solve_for_measure(mu: DislocationMeasure, complex_: Optional[LatticeComplex] = None, tol: float = 1e-10,
                      slip: Optional[SlipField] = None, max_iter_factor: int = 50, dangling_box: int = 2,
                      dangling_sweeps: int = 3) -> MinimizationResult:
    """Minimizer behind compute_F_of_mu.

    Raises:
        ComplexValidationError: the complex is not a topological disk.
        AdmissibilityError: mu violates mild separation, or the supplied slip
            does not carry mu.
    """
    cx = complex_ if complex_ is not None else mu.complex
    cx.validate()
    if not check_mild_separation(mu, cx):
        raise AdmissibilityError("Dislocation measure violates mild separation")

    if slip is None:
        sigma = representative_slip(mu, cx)
    else:
        sigma = slip
    if dislocation_measure(sigma) != mu:
        raise AdmissibilityError("Slip does not carry the requested dislocation measure")

    result = minimize_displacement(sigma, cx, tol=tol, max_iter_factor=max_iter_factor)

    dangling = np.nonzero(cx.dangling_bonds)[0]
    for sweep in range(dangling_sweeps if len(dangling) else 0):
        best = _best_dangling_slip(cx, result.displacement, dangling, dangling_box)
        if np.array_equal(best, result.slip.values[dangling]):
            break
        values = result.slip.values.copy()
        values[dangling] = best
        candidate = minimize_displacement(SlipField(cx, values), cx, tol=tol, max_iter_factor=max_iter_factor)
        logger.info(f"Dangling sweep {sweep + 1}: energy {result.energy:.6e} -> {candidate.energy:.6e}")
        if candidate.energy >= result.energy:
            break
        result = candidate
    return result


def compute_F_of_mu(mu: DislocationMeasure, complex_: Optional[LatticeComplex] = None, tol: float = 1e-10,
                    slip: Optional[SlipField] = None, max_iter_factor: int = 50, dangling_box: int = 2,
                    dangling_sweeps: int = 3) -> float:
    """Minimal energy over all displacements and slips whose dislocation measure is mu."""
    return solve_for_measure(mu, complex_, tol=tol, slip=slip, max_iter_factor=max_iter_factor,
                             dangling_box=dangling_box, dangling_sweeps=dangling_sweeps).energy
