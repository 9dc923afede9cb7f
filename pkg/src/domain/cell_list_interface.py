"""Interface Cell List - Contrat commun aux stratégies de liste de cellules"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from src.models.data_contracts import GridStatistics, LatticeBasis, ParticleSet

Cell = Tuple[int, int, int]

# Modes de balayage d'une entrée de voisinage
SCAN_SKIP = 0
SCAN_ALL = 1
SCAN_ORDERED = 2


class NeighborEntry(NamedTuple):
    """Cellule voisine et indice n de l'image du réseau (correction L n)"""
    cell: Cell
    shift: Tuple[int, int, int]


class Neighborhood(NamedTuple):
    """Voisinage d'une cellule : cas géométrique (1 à 4) et entrées"""
    case: int
    entries: List[NeighborEntry]

    @property
    def count(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ScanPlan:
    """
    Plan de balayage consommé par le noyau de recherche de paires

    Les membres des cellules et les entrées de voisinage sont stockés en CSR.
    Les positions et translations sont exprimées dans le repère de la grille ;
    frame_rotation ramène les déplacements dans le repère du laboratoire.
    """
    positions: np.ndarray
    cell_start: np.ndarray
    cell_members: np.ndarray
    nbr_start: np.ndarray
    nbr_cell: np.ndarray
    nbr_shift: np.ndarray
    nbr_mode: np.ndarray
    frame_rotation: Optional[np.ndarray] = None

    @property
    def n_cells(self) -> int:
        return int(self.cell_start.shape[0] - 1)


def bin_particles(flat_index: np.ndarray, n_cells: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tri par comptage des particules par cellule

    Returns:
        Tuple[np.ndarray, np.ndarray]: (cell_start, cell_members)
    """
    members = np.argsort(flat_index, kind='stable').astype(np.int64)
    counts = np.bincount(flat_index, minlength=n_cells)
    cell_start = np.zeros(n_cells + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    return cell_start, members


class CellGrid(ABC):
    """Grille construite pour un instantané de la boîte"""

    strategy: str
    counts: Tuple[int, int, int]
    d_cut: float

    @property
    def n_cells(self) -> int:
        c1, c2, c3 = self.counts
        return c1 * c2 * c3

    def flat_index(self, cell: Cell) -> int:
        _, c2, c3 = self.counts
        i, j, k = cell
        return (i * c2 + j) * c3 + k

    @abstractmethod
    def neighborhood(self, cell: Cell) -> Neighborhood:
        """
        Voisinage complet d'une cellule

        Args:
            cell: Indices (i, j, k)

        Returns:
            Neighborhood: Entrées (cellule, image) distinctes
        """
        pass

    @abstractmethod
    def occupants(self, cell: Cell) -> List[int]:
        """Indices des particules de la cellule"""
        pass

    @abstractmethod
    def neighborhood_volume(self) -> float:
        """Volume moyen d'un voisinage de cellule"""
        pass

    @abstractmethod
    def average_neighborhood_count(self) -> float:
        """Nombre moyen de cellules par voisinage"""
        pass

    @abstractmethod
    def scan_plan(self) -> ScanPlan:
        """Plan de balayage demi-voisinage pour le noyau"""
        pass

    def statistics(self, build_seconds: float = 0.0, scan_seconds: float = 0.0) -> GridStatistics:
        return GridStatistics(
            strategy=self.strategy,
            counts=self.counts,
            neighborhood_volume=self.neighborhood_volume(),
            average_count=self.average_neighborhood_count(),
            build_seconds=build_seconds,
            scan_seconds=scan_seconds,
        )


class CellListInterface(ABC):
    """Interface abstraite des stratégies de liste de cellules"""

    @abstractmethod
    def build(self, basis: LatticeBasis, d_cut: float, particles: ParticleSet) -> CellGrid:
        """
        Construit la grille pour la base et les positions courantes

        Raises:
            DegenerateGridError: Si la grille aliaserait les voisinages
        """
        pass

    @abstractmethod
    def counts(self, basis: LatticeBasis, d_cut: float) -> Tuple[int, int, int]:
        """Nombre de cellules par direction pour une base"""
        pass

    @abstractmethod
    def neighborhood_volume(self, basis: LatticeBasis, d_cut: float) -> float:
        """Volume moyen de voisinage, sans particules"""
        pass

    @abstractmethod
    def get_strategy_name(self) -> str:
        pass
