import numpy as np
import pytest

from app.logic.continuum import Dislocation, beta_singular, predicted_limit
from app.logic.energy import energy, enclosed_charge, loop_circulation_of_strain, reconstruct_strain
from app.logic.errors import AdmissibilityError, CrossingOrientationError, HalfLineObstructedError
from app.logic.fields import DislocationMeasure, check_mild_separation, dislocation_measure
from app.logic.lattice import LatticeVector, Orientation, TriangleId, boundary_loop, lattice_hexagon
from app.logic.recovery import (
    HalfLine,
    build_recovery_pair,
    crossing_bonds,
    cut_direction,
    representative_slip,
    slip_along_half_lines,
    snap_to_barycenter,
)

E1 = LatticeVector(1, 0)


def _up(a, b):
    return TriangleId(a, b, Orientation.UP)


@pytest.mark.parametrize("b,expected", [
    ((1, 0), (1, 0)), ((-1, 0), (1, 0)), ((0, -1), (0, 1)), ((1, -1), (-1, 1)), ((2, 1), (1, 0)),
])
def test_cut_direction(b, expected):
    assert cut_direction(b) == LatticeVector(*expected)


def test_snapping(cx8):
    # three Up barycenters are equidistant from a node
    assert snap_to_barycenter([0.0, 0.0], cx8) == _up(-1, 0)
    inside_up = cx8.barycenters[cx8.triangle_index(_up(2, 1))]
    assert snap_to_barycenter(inside_up + [0.001, 0.0], cx8) == _up(2, 1)
    with pytest.raises(AdmissibilityError):
        snap_to_barycenter([5.0, 5.0], cx8)


def test_half_line_geometry(cx8):
    line = HalfLine(_up(0, 0), LatticeVector(0, 1), cx8.epsilon)
    assert list(line.origin3) == [1, 1]
    assert np.allclose(line.origin, cx8.barycenters[cx8.triangle_index(_up(0, 0))])
    assert line.angle == pytest.approx(np.pi / 3)


def test_crossing_bonds_leave_the_right_side(cx8):
    line = HalfLine(_up(0, 0), E1, cx8.epsilon)
    cut = crossing_bonds(line, cx8)
    assert len(cut.bonds) > 0
    tails = cx8.positions[cut.tails]
    heads = cx8.positions[cut.heads]
    row = line.origin[1]
    # the cut runs to the right along a horizontal line, so right to left is upwards
    assert np.all(tails[:, 1] < row)
    assert np.all(heads[:, 1] > row)
    assert np.all(np.maximum(tails[:, 0], heads[:, 0]) > line.origin[0])


def test_node_on_half_line_is_rejected(cx8):
    with pytest.raises(CrossingOrientationError):
        crossing_bonds(HalfLine(_up(0, 0), LatticeVector(1, 1), cx8.epsilon), cx8)


@pytest.mark.parametrize("w", [(1, 0), (0, 1), (-1, 1), (0, -1), (2, 1)])
def test_half_line_slip_has_the_prescribed_measure(cx8, w):
    mu = DislocationMeasure.from_atoms(cx8, {_up(0, 0): w})
    sigma = representative_slip(mu)
    assert dislocation_measure(sigma) == mu


def test_two_atoms_on_separate_rows(cx8):
    mu = DislocationMeasure.from_atoms(cx8, {_up(-3, 0): (1, 0), _up(0, 3): (0, 1)})
    assert dislocation_measure(representative_slip(mu)) == mu


def test_obstructed_half_line(cx8):
    atoms = [(cx8.triangle_index(_up(0, 0)), E1), (cx8.triangle_index(_up(3, 0)), E1)]
    with pytest.raises(HalfLineObstructedError):
        slip_along_half_lines(cx8, atoms)


def test_empty_recovery(cx8):
    pair = build_recovery_pair([], cx8)
    assert pair.measure.is_empty
    assert pair.slip.is_zero
    assert energy(pair.displacement, pair.slip) == 0.0


def test_recovery_measure(cx16):
    pair = build_recovery_pair([Dislocation.from_spec((1, 0), (0.0, 0.0))], cx16)
    assert pair.snapped == [_up(-1, 0)]
    assert pair.measure.atoms() == {_up(-1, 0): E1}
    assert dislocation_measure(pair.slip) == pair.measure
    assert check_mild_separation(pair.measure)
    assert np.allclose(pair.displacement.values[0], 0.0)


def test_recovery_strain_matches_continuum_field(cx16):
    eps = cx16.epsilon
    pair = build_recovery_pair([((1, 0), (0.0, 0.0))], cx16)
    origin = pair.half_lines[0].origin

    w = pair.displacement.differences() - pair.slip.physical()
    mid = 0.5 * (cx16.positions[cx16.bond_tail] + cx16.positions[cx16.bond_head]) - origin
    far = np.linalg.norm(mid, axis=1) >= 0.25
    expected = eps ** 2 * np.einsum("kij,kj->ki", beta_singular(E1, mid[far]), cx16.bond_units[far])
    assert np.abs(w[far] - expected).max() <= 0.1 * eps ** 2

    strain = reconstruct_strain(pair.displacement, pair.slip)
    centers = cx16.barycenters[strain.triangles] - origin
    rho = np.linalg.norm(centers, axis=1)
    keep = rho >= 0.25
    err = np.linalg.norm(strain.betas[keep] / eps - beta_singular(E1, centers[keep]), axis=(1, 2))
    assert np.all(err <= 2 * eps / rho[keep] ** 2)


def test_loop_around_the_core_sees_the_burgers_vector(cx16):
    pair = build_recovery_pair([((1, 0), (0.0, 0.0))], cx16)
    strain = reconstruct_strain(pair.displacement, pair.slip)
    loop = boundary_loop(cx16, lattice_hexagon(cx16, int(cx16.node_index(0, 0)[0]), 2))
    expected = cx16.epsilon * E1.vector
    assert np.allclose(loop_circulation_of_strain(strain, loop), expected)
    assert np.allclose(enclosed_charge(pair.measure, loop), expected)


def test_recovery_energy_grows_like_log(cx16, cx32):
    normalized = []
    for cx in (cx16, cx32):
        pair = build_recovery_pair([((1, 0), (0.0, 0.0))], cx)
        normalized.append(energy(pair.displacement, pair.slip) / cx.epsilon ** 2)
    # E / eps^2 = A |log eps| + C, with the same core at both scales
    slope = (normalized[1] - normalized[0]) / np.log(2.0)
    assert slope == pytest.approx(predicted_limit([E1]), rel=0.25)


def test_recovery_rejects_inadmissible_targets(cx16):
    eps = cx16.epsilon
    with pytest.raises(AdmissibilityError):
        build_recovery_pair([((1, 1), (0.0, 0.0))], cx16)
    with pytest.raises(AdmissibilityError):
        build_recovery_pair([((1, 0), (0.0, 0.0)), ((0, 1), (-1e-3 * eps, 1e-3 * eps))], cx16)
    with pytest.raises(AdmissibilityError):
        build_recovery_pair([((1, 0), (0.0, 0.0)), ((-1, 0), (0.6 * eps, 0.1 * eps))], cx16)


def test_recovery_dipole(cx16):
    pair = build_recovery_pair([((1, 0), (-0.3, 0.0)), ((-1, 0), (0.3, 0.3))], cx16)
    assert len(pair.measure) == 2
    assert pair.measure.total_burgers() == LatticeVector(0, 0)
    assert dislocation_measure(pair.slip) == pair.measure


def test_close_dipole_energy_is_below_the_singles(cx16):
    targets = [((1, 0), (-0.15, 0.0)), ((-1, 0), (0.15, 0.1))]
    dipole = build_recovery_pair(targets, cx16)
    assert check_mild_separation(dipole.measure)
    singles = [build_recovery_pair([t], cx16) for t in targets]
    total = energy(dipole.displacement, dipole.slip)
    assert 0 < total <= sum(energy(p.displacement, p.slip) for p in singles)
