"""
Pair Scan - Noyau de recherche des paires dans un plan de balayage

Compilé avec numba lorsqu'il est disponible ; la même fonction est exécutée
en Python pur sinon. Le balayage est séquentiel, ce qui rend la liste de
paires déterministe.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.domain.cell_list_interface import ScanPlan

logger = logging.getLogger(__name__)

try:
    import numba
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func
        return decorator

    logger.warning("⚠️ numba indisponible - balayage des paires en Python pur")


@njit(cache=True)
def _scan_kernel(positions, cell_start, cell_members, nbr_start, nbr_cell, nbr_shift, nbr_mode,
                 cutoff_sq, out_i, out_j, out_disp, out_r2):
    n_cells = cell_start.shape[0] - 1
    capacity = out_i.shape[0]
    n_found = 0
    n_checks = 0
    for cell in range(n_cells):
        a_lo = cell_start[cell]
        a_hi = cell_start[cell + 1]
        if a_lo == a_hi:
            continue
        for entry in range(nbr_start[cell], nbr_start[cell + 1]):
            mode = nbr_mode[entry]
            if mode == 0:
                continue
            other = nbr_cell[entry]
            b_lo = cell_start[other]
            b_hi = cell_start[other + 1]
            if b_lo == b_hi:
                continue
            sx = nbr_shift[entry, 0]
            sy = nbr_shift[entry, 1]
            sz = nbr_shift[entry, 2]
            for ia in range(a_lo, a_hi):
                pa = cell_members[ia]
                xa = positions[pa, 0]
                ya = positions[pa, 1]
                za = positions[pa, 2]
                for ib in range(b_lo, b_hi):
                    pb = cell_members[ib]
                    # ordonné : chaque paire vue depuis ses deux cellules n'est gardée qu'une fois
                    if mode == 2 and pb <= pa:
                        continue
                    dx = positions[pb, 0] + sx - xa
                    dy = positions[pb, 1] + sy - ya
                    dz = positions[pb, 2] + sz - za
                    r2 = dx * dx + dy * dy + dz * dz
                    n_checks += 1
                    if r2 < cutoff_sq:
                        if n_found < capacity:
                            out_i[n_found] = pa
                            out_j[n_found] = pb
                            out_disp[n_found, 0] = dx
                            out_disp[n_found, 1] = dy
                            out_disp[n_found, 2] = dz
                            out_r2[n_found] = r2
                        n_found += 1
    return n_found, n_checks


@dataclass(frozen=True)
class PairList:
    """
    Paires trouvées : déplacement d = q_j - q_i (image comprise) dans le repère du laboratoire
    """
    i: np.ndarray
    j: np.ndarray
    displacement: np.ndarray
    r2: np.ndarray
    pair_checks: int

    def __len__(self) -> int:
        return int(self.i.shape[0])

    @classmethod
    def empty(cls, pair_checks: int = 0) -> "PairList":
        return cls(
            i=np.zeros(0, dtype=np.int64),
            j=np.zeros(0, dtype=np.int64),
            displacement=np.zeros((0, 3)),
            r2=np.zeros(0),
            pair_checks=pair_checks,
        )

    def canonical(self) -> "PairList":
        """Paires orientées i < j et triées par (i, j)"""
        swap = self.i > self.j
        i = np.where(swap, self.j, self.i)
        j = np.where(swap, self.i, self.j)
        displacement = np.where(swap[:, None], -self.displacement, self.displacement)
        order = np.lexsort((j, i))
        return PairList(i[order], j[order], displacement[order], self.r2[order], self.pair_checks)


def scan_pairs(plan: ScanPlan, cutoff: float, capacity: Optional[int] = None) -> PairList:
    """
    Balaye le plan et retourne les paires à distance < cutoff

    Args:
        plan: Plan de balayage d'une grille
        cutoff: Rayon de coupure
        capacity: Taille initiale des tampons de sortie

    Returns:
        PairList: Paires dans l'ordre de balayage
    """
    n = plan.positions.shape[0]
    if n < 2:
        return PairList.empty()
    capacity = capacity or max(1024, 16 * n)
    arrays = (
        np.ascontiguousarray(plan.positions, dtype=np.float64),
        np.ascontiguousarray(plan.cell_start, dtype=np.int64),
        np.ascontiguousarray(plan.cell_members, dtype=np.int64),
        np.ascontiguousarray(plan.nbr_start, dtype=np.int64),
        np.ascontiguousarray(plan.nbr_cell, dtype=np.int64),
        np.ascontiguousarray(plan.nbr_shift, dtype=np.float64),
        np.ascontiguousarray(plan.nbr_mode, dtype=np.int64),
    )
    while True:
        out_i = np.empty(capacity, dtype=np.int64)
        out_j = np.empty(capacity, dtype=np.int64)
        out_disp = np.empty((capacity, 3), dtype=np.float64)
        out_r2 = np.empty(capacity, dtype=np.float64)
        n_found, n_checks = _scan_kernel(*arrays, cutoff * cutoff, out_i, out_j, out_disp, out_r2)
        if n_found <= capacity:
            break
        logger.debug(f"Tampon de paires insuffisant ({capacity} < {n_found}), nouvel essai")
        capacity = int(n_found)

    displacement = out_disp[:n_found]
    if plan.frame_rotation is not None:
        displacement = displacement @ plan.frame_rotation.T
    return PairList(
        i=out_i[:n_found].copy(),
        j=out_j[:n_found].copy(),
        displacement=np.ascontiguousarray(displacement),
        r2=out_r2[:n_found].copy(),
        pair_checks=int(n_checks),
    )


def configure_threads(threads: int) -> int:
    """
    Plafonne le pool de threads numba (0 = automatique)

    Returns:
        int: Nombre de threads effectif (1 sans numba)
    """
    if not HAS_NUMBA:
        return 1
    if threads > 0:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return int(numba.get_num_threads())
