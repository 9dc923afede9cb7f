"""
Dynamic-Offset Cell List - Cellules rectangulaires sur la boîte tournée par QR

La boîte est orientée par décomposition QR (une face dans le plan xy, une
arête sur l'axe x), les particules sont réarrangées dans le prisme
[0, r11) x [0, r22) x [0, r33), puis rangées dans des cellules alignées sur
les axes. Le voisinage d'une cellule située sur une face du prisme est
élargi pour suivre le décalage des répliques : 27, 30, 34 ou 36 cellules.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.domain.cell_list_interface import (
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
from src.domain.lattice_core import BasisLike, _cols
from src.infrastructure.cell_lists.dynamic_size import OFFSETS, OFFSET_MODES, half_stencil_mode
from src.models.data_contracts import (
    Automorphism,
    CellListStrategy,
    DegenerateGridError,
    LatticeBasis,
    ParticleSet,
)

logger = logging.getLogger(__name__)

MIN_DO_CELLS = 4
COUNT_TOLERANCE = 1e-12
# Un décalage de couture à moins de 1e-9 largeur d'une frontière de cellule est considéré aligné
ALIGNMENT_TOLERANCE = 1e-9
# Un ordre de colonnes ne remplace le précédent que s'il réduit V_DO de plus de ce facteur relatif
ORDER_TOLERANCE = 1e-9

CASE_COUNTS = {1: 27, 2: 30, 3: 34, 4: 36}


@dataclass(frozen=True)
class RotatedBasis:
    """Décomposition L = qrot r, r triangulaire supérieure à diagonale positive"""
    qrot: np.ndarray
    r: np.ndarray

    @property
    def diagonal(self) -> Tuple[float, float, float]:
        return float(self.r[0, 0]), float(self.r[1, 1]), float(self.r[2, 2])


def qr_orient(L: BasisLike) -> RotatedBasis:
    """
    Factorisation QR avec r_ii > 0 et qrot rotation propre

    det(L) > 0 et det(r) > 0 impliquent det(qrot) = +1.
    """
    q, r = np.linalg.qr(_cols(L))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[None, :]
    r = np.triu(signs[:, None] * r)
    q.setflags(write=False)
    r.setflags(write=False)
    return RotatedBasis(qrot=q, r=r)


def do_rearrange(pt: np.ndarray, r: RotatedBasis) -> np.ndarray:
    """
    Réarrange des positions du parallélépipède tourné dans le prisme rectangulaire

    k3 = floor(z / r33) ; (x, y, z) -= k3 r_col3
    k = floor(y / r22) ; y' = y - k r22 ; x' = (x - k r12) mod r11

    Args:
        pt: Position (3,) ou tableau (N, 3) dans le repère tourné
        r: Base tournée

    Returns:
        np.ndarray: Positions réarrangées, même forme que pt
    """
    points = np.array(pt, dtype=np.float64, copy=True)
    flat = points.reshape(-1, 3)
    r11, r12, r22, r33 = r.r[0, 0], r.r[0, 1], r.r[1, 1], r.r[2, 2]
    layer = np.floor(flat[:, 2] / r33)
    flat -= layer[:, None] * r.r[:, 2][None, :]
    k = np.floor(flat[:, 1] / r22)
    flat[:, 1] -= k * r22
    flat[:, 0] = np.mod(flat[:, 0] - k * r12, r11)
    return points


def _counts(rot: RotatedBasis, d_cut: float) -> Tuple[int, int, int]:
    return tuple(int(math.floor(x / d_cut * (1.0 + COUNT_TOLERANCE))) for x in rot.diagonal)


def do_counts(L: BasisLike, d_cut: float) -> Tuple[int, int, int]:
    """l_i = floor(r_ii / d_cut) pour l'ordre de colonnes de L"""
    return _counts(qr_orient(L), d_cut)


def _signed_permutation(perm: Tuple[int, int, int]) -> Automorphism:
    """Colonne j de L P = colonne perm[j] de L, signe choisi pour det(P) = +1"""
    matrix = np.zeros((3, 3), dtype=np.int64)
    matrix[list(perm), [0, 1, 2]] = 1
    if round(np.linalg.det(matrix)) < 0:
        matrix = -matrix
    return Automorphism(m=matrix)


# Identité en premier : elle est conservée à score égal
COLUMN_ORDERS: Tuple[Automorphism, ...] = tuple(
    _signed_permutation(perm) for perm in itertools.permutations(range(3))
)


def orient_columns(
    L: BasisLike,
    d_cut: float,
) -> Tuple[Automorphism, RotatedBasis, Tuple[int, int, int]]:
    """
    Ordre des colonnes de L minimisant le volume de voisinage dynamic-offset

    Chaque permutation signée P engendre le même réseau ; la QR de L P donne
    d'autres r_ii, donc d'autres l_i. Le score est V_DO x moyenne des
    voisinages en forme close. Sans ordre valide (tous les l_i >= 4), l'ordre
    retenu est celui qui maximise min l_i.

    Returns:
        (P, QR de L P, l_i)
    """
    base = _cols(L)
    best = None
    fallback = None
    for order in COLUMN_ORDERS:
        rot = qr_orient(base @ order.as_array())
        counts = _counts(rot, d_cut)
        if fallback is None or min(counts) > min(fallback[2]):
            fallback = (order, rot, counts)
        if min(counts) < MIN_DO_CELLS:
            continue
        score = do_cell_volume(rot, counts) * avg_neighborhood_count(*counts)
        if best is None or score < best[3] * (1.0 - ORDER_TOLERANCE):
            best = (order, rot, counts, score)
    if best is None:
        return fallback
    order, rot, counts, _ = best
    if not order.is_identity:
        logger.debug(f"Ordre de colonnes dynamic-offset {order.m}, l = {counts}")
    return order, rot, counts


def do_cell_volume(r: RotatedBasis, l: Tuple[int, int, int]) -> float:
    """V_DO = r11 r22 r33 / (l1 l2 l3)"""
    if min(l) < 1:
        raise ValueError(f"Nombre de cellules invalide: {l}")
    r11, r22, r33 = r.diagonal
    return r11 * r22 * r33 / (l[0] * l[1] * l[2])


def avg_neighborhood_count(l1: int, l2: int, l3: int) -> float:
    """
    Nombre moyen de cellules par voisinage pour des coutures désalignées

    27 + 14/l3 + 6/l2 - 4/(l2 l3)
    """
    return 27.0 + 14.0 / l3 + 6.0 / l2 - 4.0 / (l2 * l3)


def neighborhood_case(cell: Cell, counts: Tuple[int, int, int]) -> int:
    """Cas 1 (intérieur), 2 (face XZ), 3 (face XY) ou 4 (les deux)"""
    _, j, k = cell
    _, l2, l3 = counts
    on_xz = j in (0, l2 - 1)
    on_xy = k in (0, l3 - 1)
    return 1 + int(on_xz) + 2 * int(on_xy)


def _window(start: float) -> range:
    """Indices globaux de cellules recouvrant une fenêtre de trois largeurs"""
    nearest = round(start)
    if abs(start - nearest) < ALIGNMENT_TOLERANCE:
        return range(int(nearest), int(nearest) + 3)
    lower = math.floor(start)
    return range(lower, lower + 4)


class TemplateEntry(NamedTuple):
    """Entrée de voisinage relative à la colonne i de la cellule centrale"""
    d_col: int
    row: int
    layer: int
    b: int
    c: int
    mode: int


@dataclass
class DOLayout:
    """
    Géométrie de la grille dynamic-offset, indépendante des particules
    """
    rot: RotatedBasis
    counts: Tuple[int, int, int]
    d_cut: float
    order: Automorphism = field(default_factory=Automorphism.identity)
    _templates: Dict[Tuple[int, int], Tuple[TemplateEntry, ...]] = field(default_factory=dict, repr=False)

    @property
    def widths(self) -> Tuple[float, float, float]:
        r11, r22, r33 = self.rot.diagonal
        return r11 / self.counts[0], r22 / self.counts[1], r33 / self.counts[2]

    def is_boundary(self, j: int, k: int) -> bool:
        _, l2, l3 = self.counts
        return j in (0, l2 - 1) or k in (0, l3 - 1)

    def template(self, j: int, k: int) -> Tuple[TemplateEntry, ...]:
        """
        Voisinage de la cellule (., j, k) relatif à sa colonne

        Pour chaque couche en z, les lignes recouvrant la fenêtre en y sont
        énumérées dans le repère global des répliques (translation c r_z + b r_y) ;
        pour chaque ligne, les colonnes recouvrant la fenêtre en x tiennent
        compte du décalage c r13 + b r12.
        """
        key = (j, k)
        if key in self._templates:
            return self._templates[key]

        l1, l2, l3 = self.counts
        w1, w2, _ = self.widths
        r = self.rot.r
        entries = []
        for dz in (-1, 0, 1):
            layer_index = k + dz
            c = layer_index // l3
            layer = layer_index - c * l3
            for global_row in _window(j - 1 - c * r[1, 2] / w2):
                b = global_row // l2
                row = global_row - b * l2
                shift_x = c * r[0, 2] + b * r[0, 1]
                for d_col in _window(-1 - shift_x / w1):
                    if b == 0 and c == 0:
                        mode = half_stencil_mode((d_col, global_row - j, dz))
                    else:
                        mode = SCAN_ORDERED
                    entries.append(TemplateEntry(d_col, row, layer, b, c, mode))
        template = tuple(entries)
        self._templates[key] = template
        return template

    def neighborhood(self, cell: Cell) -> Neighborhood:
        i, j, k = cell
        l1 = self.counts[0]
        entries = []
        for entry in self.template(j, k):
            column = i + entry.d_col
            a = column // l1
            entries.append(NeighborEntry((column - a * l1, entry.row, entry.layer), (a, entry.b, entry.c)))
        return Neighborhood(case=neighborhood_case(cell, self.counts), entries=entries)

    def average_count(self) -> float:
        """Moyenne exacte sur la grille (coutures alignées comprises)"""
        l1, l2, l3 = self.counts
        total = 27 * (l2 - 2) * (l3 - 2)
        for j in range(l2):
            for k in range(l3):
                if self.is_boundary(j, k):
                    total += len(self.template(j, k))
        return total / (l2 * l3)

    def neighborhood_volume(self) -> float:
        return do_cell_volume(self.rot, self.counts) * self.average_count()

    def scan_entries(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Entrées de balayage de toutes les cellules (hors SKIP), en CSR

        Returns:
            (nbr_start, nbr_cell, indices d'image (E, 3), modes)
        """
        l1, l2, l3 = self.counts
        n_cells = l1 * l2 * l3
        columns = np.arange(l1, dtype=np.int64)
        blocks = []

        # Cellules intérieures en (j, k) : demi-stencil standard, seule x peut boucler
        interior = [(j, k) for j in range(1, l2 - 1) for k in range(1, l3 - 1)]
        if interior:
            kept = OFFSETS[OFFSET_MODES != SCAN_SKIP]
            modes = OFFSET_MODES[OFFSET_MODES != SCAN_SKIP]
            jk = np.array(interior, dtype=np.int64)
            cells = np.column_stack([
                np.repeat(columns, jk.shape[0]),
                np.tile(jk[:, 0], l1),
                np.tile(jk[:, 1], l1),
            ])
            neighbors = cells[:, None, :] + kept[None, :, :]
            a = np.floor_divide(neighbors[..., 0], l1)
            neighbors[..., 0] -= a * l1
            shifts = np.zeros_like(neighbors)
            shifts[..., 0] = a
            blocks.append((cells, neighbors, shifts, np.broadcast_to(modes, neighbors.shape[:2])))

        for j in range(l2):
            for k in range(l3):
                if not self.is_boundary(j, k):
                    continue
                template = [e for e in self.template(j, k) if e.mode != SCAN_SKIP]
                d_col = np.array([e.d_col for e in template], dtype=np.int64)
                global_col = columns[:, None] + d_col[None, :]
                a = np.floor_divide(global_col, l1)
                neighbors = np.empty((l1, len(template), 3), dtype=np.int64)
                neighbors[..., 0] = global_col - a * l1
                neighbors[..., 1] = np.array([e.row for e in template])
                neighbors[..., 2] = np.array([e.layer for e in template])
                shifts = np.empty_like(neighbors)
                shifts[..., 0] = a
                shifts[..., 1] = np.array([e.b for e in template])
                shifts[..., 2] = np.array([e.c for e in template])
                cells = np.column_stack([columns, np.full(l1, j), np.full(l1, k)])
                modes = np.broadcast_to(np.array([e.mode for e in template]), neighbors.shape[:2])
                blocks.append((cells, neighbors, shifts, modes))

        sizes = np.zeros(n_cells, dtype=np.int64)
        for cells, neighbors, _, _ in blocks:
            sizes[(cells[:, 0] * l2 + cells[:, 1]) * l3 + cells[:, 2]] = neighbors.shape[1]
        nbr_start = np.zeros(n_cells + 1, dtype=np.int64)
        np.cumsum(sizes, out=nbr_start[1:])

        total = int(nbr_start[-1])
        nbr_cell = np.empty(total, dtype=np.int64)
        shift_index = np.empty((total, 3), dtype=np.int64)
        nbr_mode = np.empty(total, dtype=np.int64)
        for cells, neighbors, shifts, modes in blocks:
            flat = (cells[:, 0] * l2 + cells[:, 1]) * l3 + cells[:, 2]
            slots = (nbr_start[flat][:, None] + np.arange(neighbors.shape[1])[None, :]).reshape(-1)
            nbr_cell[slots] = ((neighbors[..., 0] * l2 + neighbors[..., 1]) * l3 + neighbors[..., 2]).reshape(-1)
            shift_index[slots] = shifts.reshape(-1, 3)
            nbr_mode[slots] = modes.reshape(-1)
        return nbr_start, nbr_cell, shift_index, nbr_mode

    def signature(self) -> Tuple:
        """Clé de cache : les entrées entières ne dépendent que de ces gabarits"""
        l1, l2, l3 = self.counts
        boundary = tuple(
            self.template(j, k) for j in range(l2) for k in range(l3) if self.is_boundary(j, k)
        )
        return self.counts, boundary


def build_do_layout(L: BasisLike, d_cut: float, order: Optional[Automorphism] = None) -> DOLayout:
    """
    Géométrie de grille sans particules

    Args:
        L: Base courante
        d_cut: Rayon de coupure
        order: Ordre de colonnes imposé ; par défaut celui de orient_columns

    Raises:
        DegenerateGridError: Si un l_i < 4
    """
    if order is None:
        order, rot, counts = orient_columns(L, d_cut)
    else:
        rot = qr_orient(_cols(L) @ order.as_array())
        counts = _counts(rot, d_cut)
    if min(counts) < MIN_DO_CELLS:
        raise DegenerateGridError(CellListStrategy.DYNAMIC_OFFSET.value, counts, MIN_DO_CELLS)
    return DOLayout(rot=rot, counts=counts, d_cut=d_cut, order=order)


def do_grid_average_count(L: BasisLike, d_cut: float) -> float:
    """Nombre moyen de cellules par voisinage de la grille construite sur L"""
    return build_do_layout(L, d_cut).average_count()


@dataclass(frozen=True)
class DOCellGrid(CellGrid):
    """Grille dynamic-offset construite pour un instantané"""
    layout: DOLayout
    cell_of: np.ndarray
    cell_start: np.ndarray
    cell_members: np.ndarray
    positions: np.ndarray
    entries: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    strategy: str = CellListStrategy.DYNAMIC_OFFSET.value

    @property
    def counts(self) -> Tuple[int, int, int]:
        return self.layout.counts

    @property
    def d_cut(self) -> float:
        return self.layout.d_cut

    @property
    def rot(self) -> RotatedBasis:
        return self.layout.rot

    def neighborhood(self, cell: Cell) -> Neighborhood:
        return self.layout.neighborhood(cell)

    def occupants(self, cell: Cell) -> List[int]:
        index = self.flat_index(cell)
        return self.cell_members[self.cell_start[index]:self.cell_start[index + 1]].tolist()

    def neighborhood_volume(self) -> float:
        return self.layout.neighborhood_volume()

    def average_neighborhood_count(self) -> float:
        return self.layout.average_count()

    def scan_plan(self) -> ScanPlan:
        nbr_start, nbr_cell, shift_index, nbr_mode = self.entries
        return ScanPlan(
            positions=self.positions,
            cell_start=self.cell_start,
            cell_members=self.cell_members,
            nbr_start=nbr_start,
            nbr_cell=nbr_cell,
            nbr_shift=np.ascontiguousarray(shift_index @ self.rot.r.T),
            nbr_mode=nbr_mode,
            frame_rotation=self.rot.qrot,
        )


def _bin(layout: DOLayout, ps: ParticleSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rotated = ps.q @ layout.rot.qrot
    arranged = do_rearrange(rotated, layout.rot)
    widths = np.array(layout.widths)
    upper = np.array(layout.counts, dtype=np.int64) - 1
    cell_of = np.clip(np.floor(arranged / widths).astype(np.int64), 0, upper)
    l1, l2, l3 = layout.counts
    flat = (cell_of[:, 0] * l2 + cell_of[:, 1]) * l3 + cell_of[:, 2]
    cell_start, members = bin_particles(flat, l1 * l2 * l3)
    return np.ascontiguousarray(arranged), cell_of, cell_start, members


def build_do_grid(
    L: LatticeBasis,
    d_cut: float,
    ps: ParticleSet,
    entries: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None,
    order: Optional[Automorphism] = None,
) -> DOCellGrid:
    """
    Oriente la boîte, réarrange et range les particules

    Args:
        L: Base courante
        d_cut: Rayon de coupure
        ps: Particules repliées dans la cellule unité
        entries: Entrées de balayage déjà calculées pour la même signature
        order: Ordre de colonnes imposé

    Returns:
        DOCellGrid: Grille construite

    Raises:
        DegenerateGridError: Si un l_i < 4
    """
    layout = build_do_layout(L, d_cut, order)
    arranged, cell_of, cell_start, members = _bin(layout, ps)
    return DOCellGrid(
        layout=layout,
        cell_of=cell_of,
        cell_start=cell_start,
        cell_members=members,
        positions=arranged,
        entries=entries if entries is not None else layout.scan_entries(),
    )


def do_neighborhood(cell: Cell, grid: DOCellGrid) -> Neighborhood:
    """Voisinage d'une cellule avec son cas et son nombre d'entrées"""
    return grid.neighborhood(cell)


class DynamicOffsetCellList(CellListInterface):
    """Stratégie dynamic-offset, avec cache des entrées de balayage"""

    def __init__(self):
        self._cached_signature = None
        self._cached_entries = None

    def build(self, basis: LatticeBasis, d_cut: float, particles: ParticleSet) -> DOCellGrid:
        layout = build_do_layout(basis, d_cut)
        signature = layout.signature()
        if signature != self._cached_signature:
            self._cached_signature = signature
            self._cached_entries = layout.scan_entries()
            logger.debug(f"Entrées dynamic-offset recalculées pour l = {layout.counts}")
        arranged, cell_of, cell_start, members = _bin(layout, particles)
        return DOCellGrid(
            layout=layout,
            cell_of=cell_of,
            cell_start=cell_start,
            cell_members=members,
            positions=arranged,
            entries=self._cached_entries,
        )

    def counts(self, basis: LatticeBasis, d_cut: float) -> Tuple[int, int, int]:
        return orient_columns(basis, d_cut)[2]

    def neighborhood_volume(self, basis: LatticeBasis, d_cut: float) -> float:
        return build_do_layout(basis, d_cut).neighborhood_volume()

    def get_strategy_name(self) -> str:
        return CellListStrategy.DYNAMIC_OFFSET.value
