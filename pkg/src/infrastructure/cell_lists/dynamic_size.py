"""
Dynamic-Size Cell List - Cellules congruentes à la boîte déformée

Les cellules sont des copies réduites de la cellule unité : c_i = floor(h_i / d_cut).
Le voisinage compte toujours 27 cellules ; le nombre de cellules varie au
cours de la déformation.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from src.domain.cell_list_interface import (
    SCAN_ALL,
    SCAN_ORDERED,
    SCAN_SKIP,
    Cell,
    CellGrid,
    CellListInterface,
    NeighborEntry,
    Neighborhood,
    ScanPlan,
    bin_particles,
)
from src.domain.lattice_core import BasisLike, _cols, box_heights, to_fractional, wrap_fractional
from src.models.data_contracts import (
    CellListStrategy,
    DegenerateGridError,
    LatticeBasis,
    ParticleSet,
)

logger = logging.getLogger(__name__)

MIN_DS_CELLS = 3
COUNT_TOLERANCE = 1e-12

OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)


def half_stencil_mode(offset) -> int:
    """Mode de balayage d'un décalage : cellule propre ordonnée, demi-stencil positif"""
    for component in offset:
        if component > 0:
            return SCAN_ALL
        if component < 0:
            return SCAN_SKIP
    return SCAN_ORDERED


OFFSET_MODES = np.array([half_stencil_mode(o) for o in OFFSETS], dtype=np.int64)


def ds_counts(L: BasisLike, d_cut: float) -> Tuple[int, int, int]:
    """c_i = floor(h_i / d_cut)"""
    return tuple(int(math.floor(h / d_cut * (1.0 + COUNT_TOLERANCE))) for h in box_heights(L))


def ds_neighborhood_volume(L: BasisLike, c: Tuple[int, int, int]) -> float:
    """V_DS = 27 det(L) / (c1 c2 c3)"""
    if min(c) < 1:
        raise ValueError(f"Nombre de cellules invalide: {c}")
    return 27.0 * float(np.linalg.det(_cols(L))) / (c[0] * c[1] * c[2])


@lru_cache(maxsize=32)
def _stencil_template(counts: Tuple[int, int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Entrées de balayage (hors SKIP) de toutes les cellules, en CSR"""
    c = np.array(counts, dtype=np.int64)
    cells = np.indices(counts).reshape(3, -1).T
    kept = OFFSETS[OFFSET_MODES != SCAN_SKIP]
    modes = OFFSET_MODES[OFFSET_MODES != SCAN_SKIP]
    neighbors = cells[:, None, :] + kept[None, :, :]
    shifts = np.floor_divide(neighbors, c)
    wrapped = neighbors - shifts * c
    nbr_cell = ((wrapped[..., 0] * counts[1] + wrapped[..., 1]) * counts[2] + wrapped[..., 2]).reshape(-1)
    nbr_start = np.arange(0, cells.shape[0] * kept.shape[0] + 1, kept.shape[0], dtype=np.int64)
    nbr_mode = np.tile(modes, cells.shape[0])
    arrays = (nbr_start, nbr_cell.astype(np.int64), shifts.reshape(-1, 3), nbr_mode)
    for array in arrays:
        array.setflags(write=False)
    return arrays


@dataclass(frozen=True)
class DSCellGrid(CellGrid):
    """Grille dynamic-size construite pour un instantané"""
    basis: LatticeBasis
    d_cut: float
    counts: Tuple[int, int, int]
    cell_of: np.ndarray
    cell_start: np.ndarray
    cell_members: np.ndarray
    positions: np.ndarray
    strategy: str = CellListStrategy.DYNAMIC_SIZE.value

    def neighborhood(self, cell: Cell) -> Neighborhood:
        c = np.array(self.counts, dtype=np.int64)
        neighbors = np.asarray(cell, dtype=np.int64)[None, :] + OFFSETS
        shifts = np.floor_divide(neighbors, c)
        wrapped = neighbors - shifts * c
        entries = [
            NeighborEntry(tuple(int(x) for x in w), tuple(int(x) for x in s))
            for w, s in zip(wrapped, shifts)
        ]
        return Neighborhood(case=1, entries=entries)

    def occupants(self, cell: Cell) -> List[int]:
        index = self.flat_index(cell)
        return self.cell_members[self.cell_start[index]:self.cell_start[index + 1]].tolist()

    def neighborhood_volume(self) -> float:
        return ds_neighborhood_volume(self.basis, self.counts)

    def average_neighborhood_count(self) -> float:
        return 27.0

    def scan_plan(self) -> ScanPlan:
        nbr_start, nbr_cell, shift_index, nbr_mode = _stencil_template(self.counts)
        return ScanPlan(
            positions=self.positions,
            cell_start=self.cell_start,
            cell_members=self.cell_members,
            nbr_start=nbr_start,
            nbr_cell=nbr_cell,
            nbr_shift=np.ascontiguousarray(shift_index @ self.basis.cols.T),
            nbr_mode=nbr_mode,
        )


def build_ds_grid(L: LatticeBasis, d_cut: float, ps: ParticleSet) -> DSCellGrid:
    """
    Range les particules dans les cellules congruentes à la boîte

    Args:
        L: Base courante
        d_cut: Rayon de coupure
        ps: Particules repliées dans la cellule unité

    Returns:
        DSCellGrid: Grille construite

    Raises:
        DegenerateGridError: Si un c_i < 3
    """
    counts = ds_counts(L, d_cut)
    if min(counts) < MIN_DS_CELLS:
        raise DegenerateGridError(CellListStrategy.DYNAMIC_SIZE.value, counts, MIN_DS_CELLS)

    c = np.array(counts, dtype=np.int64)
    lam = wrap_fractional(to_fractional(ps.q, L))
    cell_of = np.clip(np.floor(lam * c).astype(np.int64), 0, c - 1)
    flat = (cell_of[:, 0] * counts[1] + cell_of[:, 1]) * counts[2] + cell_of[:, 2]
    cell_start, members = bin_particles(flat, counts[0] * counts[1] * counts[2])
    return DSCellGrid(
        basis=L,
        d_cut=d_cut,
        counts=counts,
        cell_of=cell_of,
        cell_start=cell_start,
        cell_members=members,
        positions=np.ascontiguousarray(ps.q),
    )


def ds_neighborhood(cell: Cell, grid: DSCellGrid) -> List[NeighborEntry]:
    """Les 27 entrées (cellule, image) du voisinage d'une cellule"""
    return grid.neighborhood(cell).entries


class DynamicSizeCellList(CellListInterface):
    """Stratégie dynamic-size"""

    def build(self, basis: LatticeBasis, d_cut: float, particles: ParticleSet) -> DSCellGrid:
        return build_ds_grid(basis, d_cut, particles)

    def counts(self, basis: LatticeBasis, d_cut: float) -> Tuple[int, int, int]:
        return ds_counts(basis, d_cut)

    def neighborhood_volume(self, basis: LatticeBasis, d_cut: float) -> float:
        counts = ds_counts(basis, d_cut)
        if min(counts) < 1:
            raise DegenerateGridError(self.get_strategy_name(), counts, 1)
        return ds_neighborhood_volume(basis, counts)

    def get_strategy_name(self) -> str:
        return CellListStrategy.DYNAMIC_SIZE.value
