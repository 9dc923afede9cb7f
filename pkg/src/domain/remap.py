"""
Remap - Changements de base unimodulaires maintenant la boîte bien conditionnée

Politiques supportées :
- Lees-Edwards pour le cisaillement plan
- Kraynik-Reinelt pour l'élongation plane (réinitialisation exacte toutes les t*)
- Étirement borné par une paire d'automorphismes commutants (flux diagonaux)
- Réduction de base gloutonne déclenchée par le rapport d'aspect (flux 3D quelconques)
"""

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from src.models.data_contracts import (
    Automorphism,
    DeformationMetrics,
    FlowMatrix,
    GeneralizedKRPolicy,
    IntMatrix,
    KRPlanarPolicy,
    LatticeBasis,
    LeesEdwardsMismatchError,
    LeesEdwardsPolicy,
    NoRemapPolicy,
    ReductionPolicy,
    RemapBoundError,
    RemapEvent,
    RemapPolicy,
    RemapState,
    integer_det,
)
from src.domain.lattice_core import BasisLike, _cols, box_heights, matrix_exponential

logger = logging.getLogger(__name__)

LEES_EDWARDS_MATRIX: IntMatrix = ((1, -1, 0), (0, 1, 0), (0, 0, 1))
KR_PLANAR_MATRIX: IntMatrix = ((2, 1, 0), (1, 1, 0), (0, 0, 1))
# Matrice symétrique unimodulaire de polynôme caractéristique x^3 - x^2 - 2x + 1
GENERALIZED_KR_GENERATOR: IntMatrix = ((1, 1, 0), (1, 0, 1), (0, 1, 0))
# Changement de base v2 -> v1 + v2 appliqué au cube propre
GENERALIZED_KR_SHEAR: IntMatrix = ((1, 1, 0), (0, 1, 0), (0, 0, 1))
IDENTITY_MATRIX: IntMatrix = ((1, 0, 0), (0, 1, 0), (0, 0, 1))

LEES_EDWARDS_TOLERANCE = 1e-9
KR_RESET_TOLERANCE = 1e-8
_SHORTENING_FACTOR = 1.0 - 1e-12
_MAX_REDUCTION_PASSES = 1000


# ============================================================================
# ARITHMÉTIQUE ENTIÈRE SL(3, Z)
# ============================================================================

def integer_inverse(m: Sequence[Sequence[int]]) -> IntMatrix:
    """
    Inverse exacte d'une matrice entière de déterminant 1 (adjugée)

    Raises:
        ValueError: Si det(m) != 1
    """
    det = integer_det(m)
    if det != 1:
        raise ValueError(f"Inverse entière impossible: det = {det}")
    cof = [[0] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            rows = [r for r in range(3) if r != i]
            cols = [c for c in range(3) if c != j]
            minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]]
            cof[i][j] = (-1) ** (i + j) * minor
    return tuple(tuple(cof[j][i] for j in range(3)) for i in range(3))


def inverse_automorphism(M: Automorphism) -> Automorphism:
    return Automorphism(m=integer_inverse(M.m))


def integer_product(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> IntMatrix:
    return tuple(tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)) for i in range(3))


def integer_power(m: Sequence[Sequence[int]], n: int) -> IntMatrix:
    """m^n en arithmétique entière, n négatif via l'inverse exacte"""
    if n < 0:
        m, n = integer_inverse(m), -n
    result = IDENTITY_MATRIX
    for _ in range(n):
        result = integer_product(result, m)
    return result


def apply_automorphism(L: BasisLike, M: Automorphism) -> LatticeBasis:
    """Nouvelle base L M (même ensemble de points du réseau)"""
    return LatticeBasis(cols=_cols(L) @ M.as_array())


# ============================================================================
# DIAGNOSTICS DE DÉFORMATION
# ============================================================================

def deformation_metrics(L: BasisLike) -> DeformationMetrics:
    """
    Hauteur minimale, rapport d'aspect maximal et inclinaisons

    L'inclinaison de v_i est l'angle entre v_i et la normale aux faces
    engendrées par les deux autres vecteurs : arccos(h_i / |v_i|).
    """
    cols = _cols(L)
    heights = np.array(box_heights(cols))
    norms = np.linalg.norm(cols, axis=0)
    tilts = np.degrees(np.arccos(np.clip(heights / norms, -1.0, 1.0)))
    min_height = float(heights.min())
    return DeformationMetrics(
        min_height=min_height,
        max_aspect=float(norms.max() / min_height),
        tilt_angles=tuple(float(x) for x in tilts),
    )


# ============================================================================
# LEES-EDWARDS
# ============================================================================

def lees_edwards_offset(L: BasisLike, box_length: float) -> float:
    """
    Décalage de cisaillement de la colonne 2 d'une base de la forme
    [[a, s, 0], [0, a, 0], [0, 0, a]]

    Raises:
        LeesEdwardsMismatchError: Si la base n'a pas cette forme
    """
    cols = _cols(L)
    expected = box_length * np.eye(3)
    expected[0, 1] = cols[0, 1]
    deviation = float(np.max(np.abs(cols - expected)))
    if deviation > LEES_EDWARDS_TOLERANCE * box_length:
        raise LeesEdwardsMismatchError(
            f"Base incompatible avec Lees-Edwards (écart {deviation:.3e} pour a = {box_length})"
        )
    return float(cols[0, 1])


def lees_edwards_step(L: BasisLike, policy: LeesEdwardsPolicy) -> Optional[Automorphism]:
    """
    Automorphisme ramenant le décalage dans [-a/2, a/2)

    Returns:
        Optional[Automorphism]: [[1, -k, 0], [0, 1, 0], [0, 0, 1]] ou None
    """
    a = policy.box_length
    offset = lees_edwards_offset(L, a)
    k = math.floor(offset / a + 0.5)
    if k == 0:
        return None
    return Automorphism(m=((1, -k, 0), (0, 1, 0), (0, 0, 1)))


# ============================================================================
# KRAYNIK-REINELT
# ============================================================================

def kr_reset_check(L0: BasisLike, a, M: Automorphism, t: float) -> bool:
    """Vrai si e^{At} L0 = L0 M (à 1e-8 relatif près)"""
    cols = _cols(L0)
    evolved = matrix_exponential(a, t) @ cols
    target = cols @ M.as_array()
    scale = float(np.max(np.abs(cols)))
    return bool(np.max(np.abs(evolved - target)) < KR_RESET_TOLERANCE * scale)


def _eigen_basis(m: IntMatrix) -> Tuple[np.ndarray, np.ndarray]:
    matrix = np.array(m, dtype=np.float64)
    if np.any(matrix != matrix.T):
        raise ValueError("La matrice génératrice doit être symétrique")
    return np.linalg.eigh(matrix)


def _orient(rows: np.ndarray) -> np.ndarray:
    if np.linalg.det(rows) < 0:
        rows = rows.copy()
        rows[2] = -rows[2]
    return rows


def kr_planar_initial_basis(
    rate: float,
    box_length: float,
    automorphism: IntMatrix = KR_PLANAR_MATRIX,
) -> Tuple[LatticeBasis, float]:
    """
    Réseau initial Kraynik-Reinelt pour l'élongation plane diag(rate, -rate, 0)

    Les lignes de L0 sont les vecteurs propres de M (valeur propre maximale
    sur x, minimale sur y, unité sur z), d'où e^{At*} L0 = L0 M.

    Args:
        rate: Taux d'élongation (> 0)
        box_length: Côté (det(L0) = box_length^3)
        automorphism: Matrice symétrique de SL(3, Z) avec une valeur propre 1

    Returns:
        Tuple[LatticeBasis, float]: (L0, t*)

    Raises:
        ValueError: Si rate <= 0 ou si M n'a pas de valeur propre unité
    """
    if rate <= 0:
        raise ValueError(f"Taux d'élongation non positif: {rate}")
    values, vectors = _eigen_basis(automorphism)
    order = [int(np.argmax(values)), int(np.argmin(values))]
    order.append(3 - sum(order))
    if abs(values[order[2]] - 1.0) > 1e-12:
        raise ValueError("La matrice KR doit avoir une valeur propre égale à 1")
    rows = _orient(vectors[:, order].T)
    t_star = math.log(values[order[0]]) / rate
    logger.debug(f"Réseau KR plan: t* = {t_star:.6f}, étirement {values[order[0]]:.6f}")
    return LatticeBasis(cols=box_length * rows), t_star


def generalized_kr_initial_basis(box_length: float) -> LatticeBasis:
    """
    Cube tourné selon les vecteurs propres de GENERALIZED_KR_GENERATOR

    Sous tout flux diagonal sans trace, le réseau exact reste un étirement
    borné de lui-même (voir generalized_kr_policy).
    """
    _, vectors = _eigen_basis(GENERALIZED_KR_GENERATOR)
    return LatticeBasis(cols=box_length * _orient(vectors.T))


# ============================================================================
# ÉTIREMENT BORNÉ (PAIRE D'AUTOMORPHISMES)
# ============================================================================

def _covering_radius(first: np.ndarray, second: np.ndarray) -> float:
    """Rayon du disque recouvrant la cellule de Voronoï du réseau plan engendré"""
    w1, w2 = np.array(first, dtype=np.float64), np.array(second, dtype=np.float64)
    while True:
        if np.dot(w2, w2) < np.dot(w1, w1):
            w1, w2 = w2, w1
        k = int(np.rint(np.dot(w1, w2) / np.dot(w1, w1)))
        if k == 0:
            break
        w2 = w2 - k * w1
    if np.dot(w1, w2) > 0:
        w2 = -w2
    # Base obtuse : le triangle (0, w1, w1 + w2) est non obtus, son cercle circonscrit borne la cellule
    a, b, c = np.linalg.norm(w1), np.linalg.norm(w2), np.linalg.norm(w1 + w2)
    area = 0.5 * np.linalg.norm(np.cross(w1, w2))
    return float(a * b * c / (4.0 * area))


def generalized_kr_policy(
    box_length: float,
    generator: IntMatrix = GENERALIZED_KR_GENERATOR,
) -> Tuple[LatticeBasis, GeneralizedKRPolicy]:
    """
    Base initiale et politique d'étirement borné pour les flux diagonaux

    Les lignes du cube propre C sont les vecteurs propres de G, d'où
    e^{diag(log λ²)} C = C G². La seconde unité (G² - 2I)² partage ces
    vecteurs propres ; leurs étirements engendrent un réseau plan du plan
    des traces nulles. L0 = C U avec U = GENERALIZED_KR_SHEAR, la paire est
    exprimée dans la base L0 (U⁻¹ M U).

    Args:
        box_length: Côté (det(L0) = box_length^3)
        generator: Matrice symétrique entière, det ±1, à valeurs propres réelles distinctes

    Returns:
        Tuple[LatticeBasis, GeneralizedKRPolicy]: (L0, politique)

    Raises:
        ValueError: Si la paire ne vérifie pas e^{diag(ω)} L0 = L0 M
    """
    values, vectors = _eigen_basis(generator)
    cube = box_length * _orient(vectors.T)
    shear = np.array(GENERALIZED_KR_SHEAR, dtype=np.float64)
    L0 = LatticeBasis(cols=cube @ shear)

    squared = integer_product(generator, generator)
    conjugate = tuple(tuple(squared[i][j] - 2 * int(i == j) for j in range(3)) for i in range(3))
    shear_inverse = integer_inverse(GENERALIZED_KR_SHEAR)
    pair = []
    for unit in (squared, integer_product(conjugate, conjugate)):
        pair.append(Automorphism(m=integer_product(integer_product(shear_inverse, unit), GENERALIZED_KR_SHEAR)))
    stretches = (2.0 * np.log(np.abs(values)), 2.0 * np.log(np.abs(values ** 2 - 2.0)))

    for M, stretch in zip(pair, stretches):
        stretched = np.exp(stretch)[:, None] * L0.cols
        if not np.allclose(stretched, L0.cols @ M.as_array(), rtol=0.0, atol=KR_RESET_TOLERANCE * box_length):
            raise ValueError("La paire d'automorphismes n'étire pas L0 selon ses valeurs propres")

    radius = _covering_radius(*stretches)
    bound = deformation_metrics(L0).max_aspect * math.exp(math.sqrt(2.0) * radius)
    logger.debug(f"Étirement borné: rayon {radius:.4f}, max_aspect <= {bound:.3f}")
    policy = GeneralizedKRPolicy(
        reference=L0,
        first=pair[0],
        second=pair[1],
        first_stretch=tuple(float(x) for x in stretches[0]),
        second_stretch=tuple(float(x) for x in stretches[1]),
        stretch_radius=radius,
        aspect_bound=bound,
    )
    return L0, policy


def flow_stretch(flow: FlowMatrix, t: float) -> np.ndarray:
    """Étirement accumulé t diag(A) d'un flux diagonal"""
    if not flow.is_diagonal:
        raise ValueError("L'étirement borné exige un flux diagonal")
    return t * np.diag(flow.a)


def nearest_stretch_shift(policy: GeneralizedKRPolicy, stretch: np.ndarray) -> Tuple[int, int]:
    """(n1, n2) minimisant |stretch - n1 ω1 - n2 ω2|"""
    generators = np.column_stack([policy.first_stretch, policy.second_stretch])
    coeffs, *_ = np.linalg.lstsq(generators, stretch, rcond=None)
    base = np.floor(coeffs).astype(np.int64)
    best, best_norm = (0, 0), math.inf
    for da in (-1, 0, 1, 2):
        for db in (-1, 0, 1, 2):
            shift = (int(base[0] + da), int(base[1] + db))
            norm = float(np.linalg.norm(stretch - generators @ np.array(shift, dtype=np.float64)))
            if norm < best_norm:
                best, best_norm = shift, norm
    return best


def residual_stretch(policy: GeneralizedKRPolicy, stretch: np.ndarray, shift: Tuple[int, int]) -> np.ndarray:
    return (
        np.asarray(stretch, dtype=np.float64)
        - shift[0] * np.array(policy.first_stretch)
        - shift[1] * np.array(policy.second_stretch)
    )


def generalized_kr_basis(policy: GeneralizedKRPolicy, stretch: np.ndarray, shift: Tuple[int, int]) -> LatticeBasis:
    """Base canonique e^{diag(reste)} L0, recalculée sans advection"""
    residual = residual_stretch(policy, stretch, shift)
    return LatticeBasis(cols=np.exp(residual)[:, None] * policy.reference.cols)


# ============================================================================
# RÉDUCTION GLOUTONNE
# ============================================================================

def _shorten_pairwise(cols: np.ndarray, unimodular: np.ndarray) -> bool:
    changed = False
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            bj = cols[:, j]
            k = int(np.rint(np.dot(cols[:, i], bj) / np.dot(bj, bj)))
            if k == 0:
                continue
            candidate = cols[:, i] - k * bj
            if np.dot(candidate, candidate) < _SHORTENING_FACTOR * np.dot(cols[:, i], cols[:, i]):
                cols[:, i] = candidate
                unimodular[:, i] -= k * unimodular[:, j]
                changed = True
    return changed


def _shorten_against_plane(cols: np.ndarray, unimodular: np.ndarray) -> bool:
    changed = False
    for i in range(3):
        j, k = [c for c in range(3) if c != i]
        plane = cols[:, [j, k]]
        coeffs, *_ = np.linalg.lstsq(plane, cols[:, i], rcond=None)
        base = np.floor(coeffs).astype(np.int64)
        best = None
        best_norm = _SHORTENING_FACTOR * np.dot(cols[:, i], cols[:, i])
        for dj in (-1, 0, 1, 2):
            for dk in (-1, 0, 1, 2):
                cj, ck = int(base[0] + dj), int(base[1] + dk)
                if cj == 0 and ck == 0:
                    continue
                candidate = cols[:, i] - cj * cols[:, j] - ck * cols[:, k]
                norm = np.dot(candidate, candidate)
                if norm < best_norm:
                    best, best_norm = (cj, ck, candidate), norm
        if best is not None:
            cj, ck, candidate = best
            cols[:, i] = candidate
            unimodular[:, i] -= cj * unimodular[:, j] + ck * unimodular[:, k]
            changed = True
    return changed


def reduce_basis(L: BasisLike, threshold: Optional[float] = None) -> Tuple[LatticeBasis, Automorphism]:
    """
    Réduction gloutonne de la base

    Chaque colonne est raccourcie par soustraction de multiples entiers des
    autres colonnes (réduction de Lagrange par paires, puis combinaisons
    des deux autres colonnes) jusqu'à point fixe.

    Args:
        L: Base à réduire
        threshold: Borne de max_aspect exigée de la base réduite (aucune si None)

    Returns:
        Tuple[LatticeBasis, Automorphism]: (L M, M) avec det(M) = 1

    Raises:
        RemapBoundError: Si la base réduite dépasse threshold
    """
    cols = _cols(L).copy()
    unimodular = np.eye(3, dtype=np.int64)
    for _ in range(_MAX_REDUCTION_PASSES):
        changed = _shorten_pairwise(cols, unimodular)
        changed = _shorten_against_plane(cols, unimodular) or changed
        if not changed:
            break
    else:
        logger.warning("⚠️ Réduction de base interrompue après le nombre maximal de passes")

    M = Automorphism(m=[[int(x) for x in row] for row in unimodular.tolist()])
    reduced = apply_automorphism(L, M)
    if threshold is not None:
        aspect = deformation_metrics(reduced).max_aspect
        if aspect > threshold:
            logger.error(f"❌ Base réduite hors borne: max_aspect {aspect:.4f} > {threshold}")
            raise RemapBoundError(aspect, threshold)
    return reduced, M


# ============================================================================
# MOTEUR DE POLITIQUE
# ============================================================================

class RemapEngine:
    """
    Applique la politique de remapping configurée une fois par pas
    """

    def __init__(self, policy: RemapPolicy, flow: Optional[FlowMatrix] = None):
        if isinstance(policy, GeneralizedKRPolicy) and (flow is None or not flow.is_diagonal):
            raise ValueError("La politique generalized_kr exige un flux diagonal")
        self.policy = policy
        self.flow = flow
        logger.debug(f"RemapEngine initialisé avec la politique {policy.kind}")

    def _propose(
        self, basis: LatticeBasis, t: float, state: RemapState
    ) -> Tuple[Optional[Automorphism], RemapState, Optional[LatticeBasis]]:
        policy = self.policy
        if isinstance(policy, LeesEdwardsPolicy):
            return lees_edwards_step(basis, policy), state, None
        if isinstance(policy, KRPlanarPolicy):
            if t - state.last_reset_time < policy.t_star * (1.0 - 1e-12):
                return None, state, None
            next_state = state.model_copy(update={"last_reset_time": state.last_reset_time + policy.t_star})
            return inverse_automorphism(policy.automorphism), next_state, None
        if isinstance(policy, ReductionPolicy):
            if deformation_metrics(basis).max_aspect <= policy.threshold:
                return None, state, None
            _, M = reduce_basis(basis, policy.threshold)
            return (None if M.is_identity else M), state, None
        if isinstance(policy, GeneralizedKRPolicy):
            stretch = flow_stretch(self.flow, t)
            shift = nearest_stretch_shift(policy, stretch)
            previous = state.stretch_shift
            if shift == previous:
                return None, state, None
            m = integer_product(
                integer_power(policy.first.m, previous[0] - shift[0]),
                integer_power(policy.second.m, previous[1] - shift[1]),
            )
            next_state = state.model_copy(update={"stretch_shift": shift})
            return Automorphism(m=m), next_state, generalized_kr_basis(policy, stretch, shift)
        return None, state, None

    def check(self, basis: LatticeBasis, t: float, state: RemapState) -> Optional[RemapEvent]:
        """
        Vérifie la politique sur la base courante

        Args:
            basis: Base après advection
            t: Temps courant
            state: État accumulé de la politique

        Returns:
            Optional[RemapEvent]: Événement avec la nouvelle base, ou None
        """
        if isinstance(self.policy, NoRemapPolicy):
            return None
        M, state, exact = self._propose(basis, t, state)
        if M is None:
            return None
        new_basis = exact if exact is not None else apply_automorphism(basis, M)
        event = RemapEvent(
            policy=self.policy.kind,
            t=t,
            automorphism=M,
            basis=new_basis,
            before=deformation_metrics(basis),
            after=deformation_metrics(new_basis),
            state=state.model_copy(update={
                "n_remaps": state.n_remaps + 1,
                "accumulated": state.accumulated.compose(M),
            }),
        )
        logger.debug(
            f"🔄 Remap {event.policy} à t = {t:.4f}: aspect {event.before.max_aspect:.3f} -> {event.after.max_aspect:.3f}"
        )
        return event
