"""Tests de la liste de cellules dynamic-offset"""

import itertools
import math

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from src.domain.cell_list_factory import CellListFactory
from src.domain.metrics_bench import EQUILIBRIUM_EFFICIENCY, search_efficiency
from src.infrastructure.cell_lists.dynamic_offset import (
    CASE_COUNTS,
    COLUMN_ORDERS,
    DynamicOffsetCellList,
    avg_neighborhood_count,
    build_do_grid,
    build_do_layout,
    do_cell_volume,
    do_counts,
    do_neighborhood,
    do_rearrange,
    neighborhood_case,
    orient_columns,
    qr_orient,
)
from src.models.data_contracts import Automorphism, DegenerateGridError, FlowMatrix, LatticeBasis, ParticleSet
from src.domain.lattice_core import evolve_basis


def upper_basis(r: np.ndarray) -> LatticeBasis:
    return LatticeBasis(cols=np.array(r, dtype=np.float64))


def generic_basis(l1: int, l2: int, l3: int) -> LatticeBasis:
    """
    Base triangulaire supérieure de comptes (l1, l2, l3) pour d_cut = 1, dont
    aucun décalage de couture n'est un multiple entier de la largeur de cellule
    """
    w1, w2, w3 = (l1 + 0.5) / l1, (l2 + 0.5) / l2, (l3 + 0.5) / l3
    return upper_basis([
        [l1 * w1, 0.31 * w1, 0.17 * w1],
        [0.0, l2 * w2, 0.43 * w2],
        [0.0, 0.0, l3 * w3],
    ])


def empty_particles() -> ParticleSet:
    return ParticleSet(q=np.zeros((1, 3)), p=np.zeros((1, 3)))


@pytest.mark.unit
class TestOrientation:

    def test_cube(self):
        rot = qr_orient(LatticeBasis.cube(10.0))
        assert np.allclose(rot.qrot, np.eye(3))
        assert np.allclose(rot.r, 10.0 * np.eye(3))

    def test_rotated_cube(self):
        rotation = special_ortho_group.rvs(3, random_state=7)
        rot = qr_orient(LatticeBasis(cols=rotation @ (10.0 * np.eye(3))))
        assert np.allclose(rot.r, 10.0 * np.eye(3), atol=1e-10)
        assert np.allclose(rot.qrot, rotation, atol=1e-12)

    def test_factorization(self, rng, deformed_basis_factory):
        basis = deformed_basis_factory(rng)
        rot = qr_orient(basis)
        assert np.allclose(rot.qrot @ rot.r, basis.cols, atol=1e-12)
        assert np.allclose(np.tril(rot.r, -1), 0.0)
        assert all(x > 0 for x in rot.diagonal)
        assert np.linalg.det(rot.qrot) == pytest.approx(1.0)

    def test_sheared_cube(self):
        cols = np.eye(3)
        cols[0, 1] = 0.5
        assert np.allclose(qr_orient(cols).r, cols)


@pytest.mark.unit
class TestRearrange:

    def test_example(self):
        rot = qr_orient(upper_basis([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        assert np.allclose(do_rearrange(np.array([1.3, 1.2, 0.0]), rot), [0.8, 0.2, 0.0])

    def test_points_land_in_prism(self, rng, deformed_basis_factory, uniform_particles_factory):
        basis = deformed_basis_factory(rng)
        ps = uniform_particles_factory(rng, basis, 500)
        rot = qr_orient(basis)
        arranged = do_rearrange(ps.q @ rot.qrot, rot)
        r11, r22, r33 = rot.diagonal
        assert np.all(arranged[:, 0] >= 0.0) and np.all(arranged[:, 0] < r11)
        assert np.all(arranged[:, 1] >= -1e-12) and np.all(arranged[:, 1] < r22 + 1e-12)
        assert np.all(arranged[:, 2] >= -1e-12) and np.all(arranged[:, 2] < r33 + 1e-12)


@pytest.mark.unit
class TestCountsAndVolume:

    def test_cube(self, cube10):
        assert do_counts(cube10, 1.0) == (10, 10, 10)

    def test_uniaxial_box(self):
        basis = evolve_basis(LatticeBasis.cube(10.0), FlowMatrix.uniaxial(0.05), 10.0)
        assert do_counts(basis, 1.0) == (16, 7, 7)
        assert do_cell_volume(qr_orient(basis), (16, 7, 7)) == pytest.approx(1000.0 / 784.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateGridError) as excinfo:
            build_do_grid(LatticeBasis.cube(3.9), 1.0, empty_particles())
        assert excinfo.value.counts == (3, 3, 3)
        assert excinfo.value.minimum == 4

    def test_equilibrium_volume(self, cube10):
        layout = build_do_layout(cube10, 1.0)
        assert layout.average_count() == 27.0
        assert layout.neighborhood_volume() == pytest.approx(27.0)
        assert search_efficiency(layout.neighborhood_volume(), 1.0) == pytest.approx(EQUILIBRIUM_EFFICIENCY)


@pytest.mark.unit
class TestNeighborhoodCases:

    @pytest.fixture
    def grid(self):
        basis = upper_basis([[10.0, 2.3, 1.45], [0.0, 10.0, 3.15], [0.0, 0.0, 10.0]])
        return build_do_grid(basis, 1.0, empty_particles(), order=Automorphism.identity())

    @pytest.mark.parametrize("cell, case, count", [
        ((5, 5, 5), 1, 27),
        ((5, 0, 5), 2, 30),
        ((5, 9, 5), 2, 30),
        ((5, 5, 0), 3, 34),
        ((5, 5, 9), 3, 34),
        ((5, 0, 0), 4, 36),
        ((0, 9, 9), 4, 36),
    ])
    def test_counts(self, grid, cell, case, count):
        neighborhood = do_neighborhood(cell, grid)
        assert neighborhood.case == case
        assert neighborhood.count == count == CASE_COUNTS[case]

    def test_entries_are_distinct(self, grid):
        for cell in itertools.product(range(10), (0, 1, 9), (0, 4, 9)):
            entries = grid.neighborhood(cell).entries
            assert len(set(entries)) == len(entries)

    def test_case_labels(self):
        assert neighborhood_case((0, 3, 3), (8, 8, 8)) == 1
        assert neighborhood_case((0, 7, 3), (8, 8, 8)) == 2
        assert neighborhood_case((0, 3, 0), (8, 8, 8)) == 3
        assert neighborhood_case((0, 0, 7), (8, 8, 8)) == 4

    def test_aligned_seam_needs_no_widening(self, sheared_cube):
        layout = build_do_layout(sheared_cube, 1.0)
        assert layout.average_count() == pytest.approx(27.0)
        assert layout.neighborhood((3, 0, 0)).count == 27

    def test_half_misaligned_seam(self):
        layout = build_do_layout(upper_basis([[10.0, 4.5, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]]), 1.0,
                                 order=Automorphism.identity())
        assert layout.neighborhood((3, 0, 5)).count == 30
        assert layout.neighborhood((3, 5, 0)).count == 27
        assert layout.average_count() == pytest.approx(27.6, abs=1e-12)


@pytest.mark.unit
class TestAverageCount:

    def test_closed_form_values(self):
        assert avg_neighborhood_count(4, 4, 4) == pytest.approx(27 + 14 / 4 + 6 / 4 - 4 / 16)
        assert avg_neighborhood_count(50, 50, 50) == pytest.approx(27.3984)

    def test_closed_form_matches_enumeration(self):
        for l1, l2, l3 in itertools.product(range(4, 9), repeat=3):
            grid = build_do_grid(generic_basis(l1, l2, l3), 1.0, empty_particles(), order=Automorphism.identity())
            assert grid.counts == (l1, l2, l3)
            total = sum(
                grid.neighborhood(cell).count
                for cell in itertools.product(range(l1), range(l2), range(l3))
            )
            enumerated = total / (l1 * l2 * l3)
            assert abs(enumerated - avg_neighborhood_count(l1, l2, l3)) < 1e-12
            assert abs(grid.average_neighborhood_count() - enumerated) < 1e-12

    def test_large_grid_efficiency_approaches_equilibrium(self):
        layout = build_do_layout(generic_basis(50, 50, 50), 1.0, order=Automorphism.identity())
        assert layout.average_count() == pytest.approx(27.3984, abs=1e-12)
        # cellules de largeur 50.5 / 50 : seul le facteur 27 / 27.3984 vient du voisinage
        cell_factor = (50.5 / 50.0) ** 3
        efficiency = search_efficiency(layout.neighborhood_volume(), 1.0)
        assert efficiency * cell_factor == pytest.approx(EQUILIBRIUM_EFFICIENCY * 27.0 / 27.3984, rel=1e-9)
        assert efficiency * cell_factor > 0.985 * EQUILIBRIUM_EFFICIENCY


@pytest.mark.unit
class TestStrategy:

    def test_factory_returns_do(self):
        assert isinstance(CellListFactory.create("do"), DynamicOffsetCellList)
        assert CellListFactory.create("do").get_strategy_name() == "do"

    def test_do_beats_ds_on_sheared_cube(self, sheared_cube):
        do_volume = CellListFactory.create("do").neighborhood_volume(sheared_cube, 1.0)
        ds_volume = CellListFactory.create("ds").neighborhood_volume(sheared_cube, 1.0)
        assert do_volume == pytest.approx(27.0)
        assert ds_volume == pytest.approx(33.75)

    def test_cached_entries_reused(self, rng, deformed_basis_factory, uniform_particles_factory):
        cell_list = DynamicOffsetCellList()
        basis = deformed_basis_factory(rng)
        first = cell_list.build(basis, 1.1, uniform_particles_factory(rng, basis, 50))
        second = cell_list.build(basis, 1.1, uniform_particles_factory(rng, basis, 50))
        assert first.entries is second.entries

    def test_plan_rotates_back_to_lab_frame(self, rng, deformed_basis_factory, uniform_particles_factory):
        basis = deformed_basis_factory(rng)
        grid = build_do_grid(basis, 1.1, uniform_particles_factory(rng, basis, 50))
        order = grid.layout.order.as_array()
        assert np.allclose(grid.scan_plan().frame_rotation, qr_orient(basis.cols @ order).qrot)
        assert np.allclose(grid.rot.qrot @ grid.rot.r, basis.cols @ order, atol=1e-12)
        assert math.isclose(grid.neighborhood_volume(), grid.average_neighborhood_count() *
                            do_cell_volume(grid.rot, grid.counts))


@pytest.mark.unit
class TestColumnOrder:

    @pytest.fixture
    def skewed_box(self):
        """Boîte où la QR dans l'ordre d'origine écrase r22 : comptes (10, 3, 10)"""
        return LatticeBasis(cols=np.array([[10.0, 5.0, 0.0], [0.0, 3.5, 0.0], [0.0, 0.0, 10.0]]))

    def test_orders_are_proper_permutations(self):
        assert len(COLUMN_ORDERS) == 6
        assert COLUMN_ORDERS[0].is_identity
        for order in COLUMN_ORDERS:
            matrix = order.as_array()
            assert np.linalg.det(matrix) == pytest.approx(1.0)
            assert np.allclose(np.abs(matrix).sum(axis=0), 1.0)

    def test_identity_kept_on_cube(self, cube10):
        order, _, counts = orient_columns(cube10, 1.0)
        assert order.is_identity
        assert counts == (10, 10, 10)

    def test_identity_kept_on_sheared_cube(self, sheared_cube):
        assert build_do_layout(sheared_cube, 1.0).order.is_identity

    def test_skewed_box_reordered(self, skewed_box):
        assert do_counts(skewed_box, 1.0) == (10, 3, 10)
        layout = build_do_layout(skewed_box, 1.0)
        assert not layout.order.is_identity
        assert layout.counts == (6, 5, 10)
        assert layout.rot.diagonal[0] == pytest.approx(math.hypot(5.0, 3.5))

    def test_forced_identity_is_degenerate(self, skewed_box):
        with pytest.raises(DegenerateGridError) as excinfo:
            build_do_layout(skewed_box, 1.0, order=Automorphism.identity())
        assert excinfo.value.counts == (10, 3, 10)

    def test_strategy_counts_follow_order(self, skewed_box):
        assert DynamicOffsetCellList().counts(skewed_box, 1.0) == (6, 5, 10)

    def test_fallback_reports_best_minimum(self):
        with pytest.raises(DegenerateGridError) as excinfo:
            build_do_layout(LatticeBasis.cube(3.9), 1.0)
        assert excinfo.value.counts == (3, 3, 3)

    def test_reordered_grid_keeps_lattice(self, rng, skewed_box, uniform_particles_factory):
        ps = uniform_particles_factory(rng, skewed_box, 200)
        grid = build_do_grid(skewed_box, 1.0, ps)
        change = np.linalg.solve(skewed_box.cols, grid.rot.qrot @ grid.rot.r)
        assert np.allclose(change, np.round(change), atol=1e-12)
        assert abs(round(np.linalg.det(change))) == 1
        assert grid.cell_members.shape[0] == 200
