import numpy as np
import pytest

from app.logic.continuum import (
    BurgersVector,
    Dislocation,
    SingularStrain,
    angular_antiderivative,
    beta_singular,
    burgers_circulation,
    displacement_singular,
    equilibrium_residual,
    f_angular,
    g_constant,
    lattice_decomposition,
    phi,
    phi_brute_force,
    predicted_limit,
    psi,
    psi_quadrature,
)
from app.logic.energy import ElasticTensor
from app.logic.lattice import SQRT3, LatticeVector

UNIT_BURGERS = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]


@pytest.mark.parametrize("pq", UNIT_BURGERS)
def test_circulation_recovers_burgers_vector(pq):
    b = BurgersVector(*pq)
    assert b.is_unit
    for radius in (0.3, 1.0, 2.5):
        assert np.allclose(burgers_circulation(b, radius), b.vector, atol=1e-10)


@pytest.mark.parametrize("pq", [(1, 0), (0, 1), (2, -1)])
def test_strain_is_in_equilibrium(pq):
    b = LatticeVector(*pq)
    x = np.array([0.7, 0.4])
    coarse = np.linalg.norm(equilibrium_residual(b, x, 1e-2))
    fine = np.linalg.norm(equilibrium_residual(b, x, 5e-3))
    # the exact divergence is zero, so the residual is pure O(h^2) truncation
    assert fine < 1e-3
    assert np.log2(coarse / fine) > 1.7


def test_self_energy_coefficient_matches_quadrature():
    for pq in UNIT_BURGERS + [(2, 1)]:
        b = LatticeVector(*pq)
        assert psi_quadrature(b) == pytest.approx(psi(b), rel=1e-10)
    assert psi(LatticeVector(1, 0)) == pytest.approx(1 / (3 * np.pi))


def test_strain_scales_like_one_over_rho():
    b = LatticeVector(1, 0)
    x = np.array([0.3, -0.8])
    assert np.allclose(beta_singular(b, 2 * x), beta_singular(b, x) / 2)
    with pytest.raises(ValueError):
        beta_singular(b, [0.0, 0.0])


def test_antiderivative_jumps_by_burgers_vector():
    b = LatticeVector(1, 1)
    theta = np.linspace(-1.0, 2.0, 7)
    jump = angular_antiderivative(b, theta + 2 * np.pi) - angular_antiderivative(b, theta)
    assert np.allclose(jump, b.vector)
    h = 1e-6
    derivative = (angular_antiderivative(b, theta + h) - angular_antiderivative(b, theta - h)) / (2 * h)
    assert np.allclose(derivative, f_angular(b, theta), atol=1e-8)


def test_displacement_gradient_is_the_strain():
    b = LatticeVector(0, 1)
    x = np.array([0.4, 0.9])
    h = 1e-6
    grad = np.empty((2, 2))
    for j in range(2):
        step = np.zeros(2)
        step[j] = h
        grad[:, j] = (displacement_singular(b, x + step) - displacement_singular(b, x - step)) / (2 * h)
    assert np.allclose(grad, beta_singular(b, x), atol=1e-7)


def test_displacement_jumps_across_the_cut():
    b = LatticeVector(1, 0)
    cut = np.pi / 3
    d = np.array([np.cos(cut), np.sin(cut)])
    normal = np.array([-d[1], d[0]])
    above = displacement_singular(b, d + 1e-9 * normal, cut_angle=cut)
    below = displacement_singular(b, d - 1e-9 * normal, cut_angle=cut)
    assert np.allclose(below - above, b.vector, atol=1e-6)


def test_singular_strain_bundle():
    b = LatticeVector(1, 0)
    field = SingularStrain(b)
    x = np.array([[0.5, 0.5], [-0.2, 0.1]])
    assert np.allclose(field(x), beta_singular(b, x))
    assert np.allclose(field.stress(x), ElasticTensor.stress(beta_singular(b, x)))


@pytest.mark.parametrize("pq,expected", [
    ((1, 0), 1), ((0, 1), 1), ((-1, 1), 1), ((1, 1), 2), ((2, -1), 2), ((3, 2), 5), ((-2, 5), 5),
])
def test_phi_counts_lattice_steps(pq, expected):
    b = LatticeVector(*pq)
    assert phi(b) == pytest.approx(expected / (3 * np.pi))
    assert phi(b) == pytest.approx(phi_brute_force(b))
    z1, z2, z3 = lattice_decomposition(b)
    assert (z1 - z3, z2 + z3) == pq


def test_phi_is_invariant_under_lattice_rotation():
    for p in range(-4, 5):
        for q in range(-4, 5):
            # sixty degree rotation in lattice coordinates
            rotated = LatticeVector(-q, p + q)
            assert phi(rotated) == pytest.approx(phi(LatticeVector(p, q)))


def test_phi_is_subadditive_and_below_psi():
    vectors = [LatticeVector(p, q) for p in range(-3, 4) for q in range(-3, 4)]
    for a in vectors[::5]:
        for b in vectors[::7]:
            assert phi(a + b) <= phi(a) + phi(b) + 1e-12
    for pq in UNIT_BURGERS:
        assert phi(LatticeVector(*pq)) == pytest.approx(psi(LatticeVector(*pq)))


def test_predicted_limit():
    assert predicted_limit([LatticeVector(1, 0)]) == pytest.approx(SQRT3 / (6 * np.pi))
    assert predicted_limit([LatticeVector(1, 0), LatticeVector(-1, 0)]) == pytest.approx(SQRT3 / (3 * np.pi))
    assert predicted_limit([]) == 0.0


def test_dislocation_from_spec():
    d = Dislocation.from_spec([0, -1], [0.25, -0.5])
    assert d.burgers == BurgersVector(0, -1)
    assert d.position == (0.25, -0.5)


def test_sequences_are_lattice_coordinates():
    for pq in [(1, 1), (2, -1), [0, 3]]:
        b = LatticeVector(*pq)
        assert psi(pq) == psi(b)
        assert phi(pq) == phi(b)
        assert np.allclose(g_constant(pq), g_constant(b))
        assert np.allclose(f_angular(pq, 0.4), f_angular(b, 0.4))
    assert psi((1, 1)) == pytest.approx(1 / np.pi)


def test_self_energy_quadrature_for_random_burgers_vectors(rng):
    for p, q in rng.integers(-4, 5, size=(20, 2)):
        b = LatticeVector(int(p), int(q))
        assert psi_quadrature(b) == pytest.approx(b.norm_squared / (3 * np.pi), rel=1e-8, abs=1e-12)


def test_phi_agrees_with_brute_force_on_the_grid():
    for p in range(-5, 6):
        for q in range(-5, 6):
            assert phi((p, q)) == pytest.approx(phi_brute_force((p, q)), abs=1e-14)
            assert phi((p, q)) <= psi((p, q)) + 1e-14
            assert phi((-p, -q)) == pytest.approx(phi((p, q)))
    assert phi((1, 0)) == pytest.approx(1 / (3 * np.pi))
    assert phi((1, 1)) == pytest.approx(2 / (3 * np.pi))
    assert phi((2, 2)) == pytest.approx(4 / (3 * np.pi))
