"""
Forces - Évaluation des forces WCA à courte portée

Deux chemins : les listes de cellules (dynamic-size, dynamic-offset) et
l'oracle O(N^2) toutes-paires utilisé pour la vérification.
"""

import logging
import time
from typing import Tuple, Union

import numpy as np

from src.domain.cell_list_factory import CellListFactory
from src.domain.cell_list_interface import CellGrid
from src.domain.lattice_core import minimum_image_displacements
from src.infrastructure.pair_scan import PairList, scan_pairs
from src.models.data_contracts import (
    CellListStrategy,
    ForceAccumulator,
    ForceMode,
    LatticeBasis,
    ParticleSet,
    RunStrategy,
    WCAPotential,
)

logger = logging.getLogger(__name__)


def accumulate_forces(
    n: int,
    pairs: PairList,
    pot: WCAPotential,
    mode: ForceMode = ForceMode.FAST,
) -> Tuple[np.ndarray, float]:
    """
    Somme des forces de paires

    En mode vérification les paires sont d'abord mises sous forme canonique
    (i < j, triées) pour que l'accumulation ne dépende pas de la stratégie.

    Returns:
        Tuple[np.ndarray, float]: (forces N x 3, énergie potentielle)
    """
    forces = np.zeros((n, 3))
    if len(pairs) == 0:
        return forces, 0.0
    if mode == ForceMode.VERIFICATION:
        pairs = pairs.canonical()
    energy, coef = pot.pair_terms(pairs.r2)
    pair_force = coef[:, None] * pairs.displacement
    if mode == ForceMode.VERIFICATION:
        np.add.at(forces, pairs.j, pair_force)
        np.add.at(forces, pairs.i, -pair_force)
    else:
        for axis in range(3):
            forces[:, axis] = (
                np.bincount(pairs.j, weights=pair_force[:, axis], minlength=n)
                - np.bincount(pairs.i, weights=pair_force[:, axis], minlength=n)
            )
    return forces, float(np.sum(energy))


def all_pairs_pairs(ps: ParticleSet, L: LatticeBasis, cutoff: float) -> PairList:
    """Paires à distance d'image minimale < cutoff, par l'oracle exhaustif"""
    n = ps.n
    if n < 2:
        return PairList.empty()
    cutoff_sq = cutoff * cutoff
    blocks_i, blocks_j, blocks_d, blocks_r2 = [], [], [], []
    for i in range(n - 1):
        d = minimum_image_displacements(ps.q[i], ps.q[i + 1:], L)
        r2 = np.einsum('ij,ij->i', d, d)
        within = np.nonzero(r2 < cutoff_sq)[0]
        if within.size:
            blocks_i.append(np.full(within.size, i, dtype=np.int64))
            blocks_j.append(within.astype(np.int64) + i + 1)
            blocks_d.append(d[within])
            blocks_r2.append(r2[within])
    checks = n * (n - 1) // 2
    if not blocks_i:
        return PairList.empty(pair_checks=checks)
    return PairList(
        i=np.concatenate(blocks_i),
        j=np.concatenate(blocks_j),
        displacement=np.concatenate(blocks_d),
        r2=np.concatenate(blocks_r2),
        pair_checks=checks,
    )


def all_pairs_forces(
    ps: ParticleSet,
    L: LatticeBasis,
    pot: WCAPotential,
    mode: ForceMode = ForceMode.VERIFICATION,
) -> ForceAccumulator:
    """
    Forces par l'oracle toutes-paires (image minimale sur {-2..2}^3)

    Args:
        ps: Particules repliées
        L: Base courante
        pot: Potentiel WCA
        mode: Ordre d'accumulation

    Returns:
        ForceAccumulator: pair_checks = N(N-1)/2
    """
    pairs = all_pairs_pairs(ps, L, pot.d_cut)
    forces, energy = accumulate_forces(ps.n, pairs, pot, mode)
    return ForceAccumulator(
        forces=forces,
        potential_energy=energy,
        pair_checks=pairs.pair_checks,
        pairs_within_cutoff=len(pairs),
    )


def cell_list_pairs(
    ps: ParticleSet,
    L: LatticeBasis,
    cutoff: float,
    strategy: Union[str, CellListStrategy],
) -> Tuple[PairList, CellGrid, float, float]:
    """
    Construit la grille et balaye les voisinages

    Returns:
        Tuple: (paires, grille, secondes de construction, secondes de balayage)

    Raises:
        DegenerateGridError: Propagée depuis la construction de la grille
    """
    cell_list = CellListFactory.create(strategy)
    start = time.perf_counter()
    grid = cell_list.build(L, cutoff, ps)
    built = time.perf_counter()
    pairs = scan_pairs(grid.scan_plan(), cutoff)
    scanned = time.perf_counter()
    return pairs, grid, built - start, scanned - built


def cell_list_forces(
    ps: ParticleSet,
    L: LatticeBasis,
    pot: WCAPotential,
    strategy: Union[str, CellListStrategy],
    mode: ForceMode = ForceMode.FAST,
) -> ForceAccumulator:
    """
    Forces par liste de cellules

    Args:
        ps: Particules repliées
        L: Base courante
        pot: Potentiel WCA
        strategy: ds ou do
        mode: fast (ordre de balayage) ou verification (ordre canonique)

    Returns:
        ForceAccumulator: avec les statistiques de grille et les temps mesurés

    Raises:
        DegenerateGridError: Si la grille ne peut pas être construite
    """
    pairs, grid, build_seconds, scan_seconds = cell_list_pairs(ps, L, pot.d_cut, strategy)
    start = time.perf_counter()
    forces, energy = accumulate_forces(ps.n, pairs, pot, mode)
    scan_seconds += time.perf_counter() - start
    return ForceAccumulator(
        forces=forces,
        potential_energy=energy,
        pair_checks=pairs.pair_checks,
        pairs_within_cutoff=len(pairs),
        grid=grid.statistics(build_seconds=build_seconds, scan_seconds=scan_seconds),
    )


def compute_forces(
    ps: ParticleSet,
    L: LatticeBasis,
    pot: WCAPotential,
    strategy: Union[str, RunStrategy],
    mode: ForceMode = ForceMode.FAST,
) -> ForceAccumulator:
    """Aiguillage selon le sélecteur de stratégie d'un run"""
    name = strategy.value if isinstance(strategy, RunStrategy) else str(strategy)
    if name == RunStrategy.ALL_PAIRS.value:
        return all_pairs_forces(ps, L, pot, mode)
    return cell_list_forces(ps, L, pot, name, mode)


def max_relative_deviation(forces: np.ndarray, reference: np.ndarray) -> Tuple[float, int]:
    """
    Écart maximal composante par composante, relatif au max |F| de référence

    Returns:
        Tuple[float, int]: (écart, indice de la particule la plus fautive)
    """
    if reference.size == 0:
        return 0.0, -1
    scale = float(np.max(np.abs(reference)))
    if scale == 0.0:
        scale = 1.0
    deviation = np.max(np.abs(forces - reference), axis=1) / scale
    worst = int(np.argmax(deviation))
    return float(deviation[worst]), worst
