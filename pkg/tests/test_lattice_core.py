"""Tests de la boîte déformable : exponentielle, hauteurs, repliement, image minimale"""

import math

import numpy as np
import pytest

from src.domain.lattice_core import (
    box_heights,
    evolve_basis,
    image_velocity,
    lattice_point,
    matrix_exponential,
    minimum_image_displacement,
    pairwise_minimum_image_distances,
    to_fractional,
    wrap_into_cell,
    wrap_positions,
)
from src.domain.remap import LEES_EDWARDS_MATRIX, apply_automorphism
from src.models.data_contracts import Automorphism, FlowMatrix, LatticeBasis


@pytest.mark.unit
class TestMatrixExponential:

    def test_diagonal_closed_form(self):
        flow = FlowMatrix.uniaxial(0.5)
        expected = np.diag(np.exp([0.5, -0.25, -0.25]))
        assert np.allclose(matrix_exponential(flow, 1.0), expected, rtol=0, atol=1e-15)

    def test_shear_is_polynomial(self):
        propagator = matrix_exponential(FlowMatrix.shear(0.3), 2.0)
        expected = np.eye(3)
        expected[0, 1] = 0.6
        assert np.array_equal(propagator, expected)

    def test_general_flow_matches_scipy_semantics(self):
        a = np.array([[0.1, 0.2, 0.0], [0.05, -0.1, 0.3], [0.0, 0.1, 0.0]])
        forward = matrix_exponential(a, 1.5)
        backward = matrix_exponential(-a, 1.5)
        assert np.allclose(forward @ backward, np.eye(3), atol=1e-12)
        assert math.isclose(np.linalg.det(forward), 1.0, rel_tol=1e-12)


@pytest.mark.unit
class TestEvolveBasis:

    def test_zero_flow_is_identity(self):
        L0 = LatticeBasis.cube(3.0)
        assert np.array_equal(evolve_basis(L0, FlowMatrix.zero(), 7.0).cols, L0.cols)

    def test_shear_offsets_second_vector(self):
        evolved = evolve_basis(LatticeBasis.cube(10.0), FlowMatrix.shear(0.1), 5.0)
        expected = 10.0 * np.eye(3)
        expected[0, 1] = 5.0
        assert np.allclose(evolved.cols, expected, atol=1e-12)

    def test_uniaxial_scales_axes(self):
        evolved = evolve_basis(LatticeBasis.cube(1.0), FlowMatrix.uniaxial(0.05), 10.0)
        assert np.allclose(evolved.cols, np.diag([math.exp(0.5), math.exp(-0.25), math.exp(-0.25)]))

    def test_volume_is_conserved(self):
        L0 = LatticeBasis(cols=[[4.0, 1.0, 0.5], [0.0, 5.0, 1.0], [0.0, 0.0, 6.0]])
        flow = FlowMatrix(a=[[0.0, 0.3, 0.0], [0.1, 0.05, 0.0], [0.0, 0.2, -0.05]])
        assert math.isclose(evolve_basis(L0, flow, 3.0).det, L0.det, rel_tol=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            evolve_basis(LatticeBasis.cube(1.0), FlowMatrix.zero(), -1.0)


@pytest.mark.unit
class TestBoxHeights:

    def test_cube(self):
        assert box_heights(LatticeBasis.cube(2.0)) == pytest.approx((2.0, 2.0, 2.0))

    def test_sheared_unit_cube(self):
        cols = np.eye(3)
        cols[0, 1] = 0.5
        h1, h2, h3 = box_heights(cols)
        assert h1 == pytest.approx(1.0 / math.sqrt(1.25))
        assert h2 == pytest.approx(1.0)
        assert h3 == pytest.approx(1.0)

    def test_heights_times_face_areas_give_volume(self, rng, deformed_basis_factory):
        basis = deformed_basis_factory(rng)
        cols = basis.cols
        h = box_heights(basis)
        area = np.linalg.norm(np.cross(cols[:, 1], cols[:, 2]))
        assert h[0] * area == pytest.approx(basis.det, rel=1e-12)


@pytest.mark.unit
class TestWrapping:

    def test_to_fractional(self):
        L = [[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        assert np.allclose(to_fractional(np.array([1.5, 1.0, 0.0]), L), [0.5, 1.0, 0.0])

    def test_wrap_into_cell(self):
        wrapped = wrap_into_cell(np.array([1.25, -0.5, 3.0]), LatticeBasis.cube(1.0))
        assert np.allclose(wrapped, [0.25, 0.5, 0.0])

    def test_wrap_is_idempotent_and_lattice_equivalent(self, rng, deformed_basis_factory):
        basis = deformed_basis_factory(rng)
        q = rng.uniform(-30.0, 30.0, size=(200, 3))
        wrapped = wrap_positions(q, basis)
        lam = to_fractional(wrapped, basis)
        assert np.all(lam >= -1e-12) and np.all(lam < 1.0 + 1e-12)
        shift = to_fractional(q - wrapped, basis)
        assert np.allclose(shift, np.rint(shift), atol=1e-9)
        assert np.allclose(wrap_positions(wrapped, basis), wrapped, atol=1e-12)

    def test_empty_array(self):
        assert wrap_positions(np.zeros((0, 3)), LatticeBasis.cube(1.0)).shape == (0, 3)


@pytest.mark.unit
class TestMinimumImage:

    def test_across_boundary(self):
        d = minimum_image_displacement(np.array([0.5, 0, 0]), np.array([9.5, 0, 0]), LatticeBasis.cube(10.0))
        assert np.allclose(d, [-1.0, 0.0, 0.0])

    def test_invariant_under_basis_change(self, rng):
        basis = LatticeBasis.cube(5.0)
        q = wrap_positions(rng.uniform(0.0, 5.0, size=(30, 3)), basis)
        changed = apply_automorphism(basis, Automorphism(m=LEES_EDWARDS_MATRIX))
        before = pairwise_minimum_image_distances(q, basis)
        after = pairwise_minimum_image_distances(wrap_positions(q, changed), changed)
        assert np.allclose(before, after, atol=1e-12)

    def test_distances_bounded_by_half_diagonal(self, rng):
        basis = LatticeBasis.cube(4.0)
        q = rng.uniform(0.0, 4.0, size=(20, 3))
        assert pairwise_minimum_image_distances(q, basis).max() <= 2.0 * math.sqrt(3.0) + 1e-12


@pytest.mark.unit
class TestImageVelocity:

    def test_shear_image_velocity(self):
        L = LatticeBasis.cube(10.0)
        assert np.allclose(lattice_point(L, (0, 1, 0)), [0.0, 10.0, 0.0])
        assert np.allclose(image_velocity(FlowMatrix.shear(0.5), L, (0, 1, 0)), [5.0, 0.0, 0.0])
