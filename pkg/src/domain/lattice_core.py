"""
Lattice Core - Boîte de simulation déformable

Évolution de la base sous le flux (L_t = e^{At} L_0), hauteurs de boîte,
coordonnées fractionnaires, repliement dans la cellule unité et oracle
d'image minimale.
"""

import itertools
import logging
from typing import Tuple, Union

import numpy as np
from scipy.linalg import expm

from src.models.data_contracts import FlowMatrix, LatticeBasis

logger = logging.getLogger(__name__)

BasisLike = Union[LatticeBasis, np.ndarray]

# Plage d'images de l'oracle : n dans {-2..2}^3
IMAGE_RANGE = 2
_IMAGE_INDICES = np.array(
    list(itertools.product(range(-IMAGE_RANGE, IMAGE_RANGE + 1), repeat=3)), dtype=np.float64
)
_ORACLE_CHUNK = 256


def _cols(basis: BasisLike) -> np.ndarray:
    return basis.cols if isinstance(basis, LatticeBasis) else np.asarray(basis, dtype=np.float64)


def _flow(a: Union[FlowMatrix, np.ndarray]) -> np.ndarray:
    return a.a if isinstance(a, FlowMatrix) else np.asarray(a, dtype=np.float64)


# ============================================================================
# EXPONENTIELLE ET ÉVOLUTION DE LA BASE
# ============================================================================

def matrix_exponential(a: Union[FlowMatrix, np.ndarray], t: float = 1.0) -> np.ndarray:
    """
    Calcule e^{A t}

    Forme close pour les matrices diagonales et nilpotentes d'ordre 3
    (cisaillement simple), Padé avec scaling-and-squaring sinon.

    Args:
        a: Matrice de flux
        t: Temps

    Returns:
        np.ndarray: Matrice 3x3
    """
    at = _flow(a) * t
    diagonal = np.diag(at)
    if not np.any(at - np.diag(diagonal)):
        return np.diag(np.exp(diagonal))
    at2 = at @ at
    if not np.any(at2 @ at):
        return np.eye(3) + at + 0.5 * at2
    return expm(at)


def evolve_basis(L0: BasisLike, a: Union[FlowMatrix, np.ndarray], t: float) -> LatticeBasis:
    """
    Base déformée L_t = e^{At} L_0

    Raises:
        ValueError: Si t < 0
    """
    if t < 0:
        raise ValueError(f"Temps négatif: {t}")
    return LatticeBasis(cols=matrix_exponential(a, t) @ _cols(L0))


def box_heights(L: BasisLike) -> Tuple[float, float, float]:
    """
    Hauteurs de boîte h_i = det(L) / |v_j x v_k|

    h_i est la distance entre les deux faces ne contenant pas v_i.
    """
    cols = _cols(L)
    det = float(np.linalg.det(cols))
    v1, v2, v3 = cols[:, 0], cols[:, 1], cols[:, 2]
    return (
        det / float(np.linalg.norm(np.cross(v2, v3))),
        det / float(np.linalg.norm(np.cross(v1, v3))),
        det / float(np.linalg.norm(np.cross(v1, v2))),
    )


# ============================================================================
# COORDONNÉES FRACTIONNAIRES ET REPLIEMENT
# ============================================================================

def to_fractional(q: np.ndarray, L: BasisLike) -> np.ndarray:
    """Résout L λ = q pour une position (3,) ou un tableau (N, 3)"""
    q = np.asarray(q, dtype=np.float64)
    cols = _cols(L)
    if q.ndim == 1:
        return np.linalg.solve(cols, q)
    if q.shape[0] == 0:
        return q.copy()
    return np.linalg.solve(cols, q.T).T


def wrap_fractional(lam: np.ndarray) -> np.ndarray:
    """Ramène des coordonnées fractionnaires dans [0, 1) (convention floor)"""
    wrapped = lam - np.floor(lam)
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


def wrap_positions(q: np.ndarray, L: BasisLike) -> np.ndarray:
    """Replie un tableau (N, 3) de positions dans la cellule unité"""
    q = np.asarray(q, dtype=np.float64)
    if q.shape[0] == 0:
        return q.reshape(0, 3).copy()
    cols = _cols(L)
    return wrap_fractional(to_fractional(q, cols)) @ cols.T


def wrap_into_cell(q: np.ndarray, L: BasisLike) -> np.ndarray:
    """Replie une position unique dans la cellule unité"""
    return wrap_positions(np.asarray(q, dtype=np.float64).reshape(1, 3), L)[0]


def lattice_point(L: BasisLike, n) -> np.ndarray:
    """Point du réseau L n"""
    return _cols(L) @ np.asarray(n, dtype=np.float64)


def image_velocity(a: Union[FlowMatrix, np.ndarray], L: BasisLike, n) -> np.ndarray:
    """Décalage de vitesse de l'image n : A L n"""
    return _flow(a) @ lattice_point(L, n)


# ============================================================================
# ORACLE D'IMAGE MINIMALE
# ============================================================================

def image_offsets(L: BasisLike) -> np.ndarray:
    """Translations L n pour n dans {-2..2}^3, tableau (125, 3)"""
    return _IMAGE_INDICES @ _cols(L).T


def minimum_image_displacement(qi: np.ndarray, qj: np.ndarray, L: BasisLike) -> np.ndarray:
    """
    Déplacement qj + L n - qi de norme minimale sur n dans {-2..2}^3

    Oracle exhaustif, réservé aux tests et à la vérification.
    """
    d = np.asarray(qj, dtype=np.float64) - np.asarray(qi, dtype=np.float64)
    candidates = d[None, :] + image_offsets(L)
    best = int(np.argmin(np.einsum('ij,ij->i', candidates, candidates)))
    return candidates[best]


def minimum_image_displacements(qi: np.ndarray, qj: np.ndarray, L: BasisLike) -> np.ndarray:
    """
    Version vectorisée : qi (3,) contre qj (M, 3)

    Returns:
        np.ndarray: Déplacements minimaux (M, 3)
    """
    qj = np.asarray(qj, dtype=np.float64)
    offsets = image_offsets(L)
    result = np.empty_like(qj)
    for start in range(0, qj.shape[0], _ORACLE_CHUNK):
        d = qj[start:start + _ORACLE_CHUNK] - np.asarray(qi, dtype=np.float64)
        candidates = d[:, None, :] + offsets[None, :, :]
        r2 = np.einsum('mki,mki->mk', candidates, candidates)
        best = np.argmin(r2, axis=1)
        result[start:start + _ORACLE_CHUNK] = candidates[np.arange(candidates.shape[0]), best]
    return result


def pairwise_minimum_image_distances(q: np.ndarray, L: BasisLike) -> np.ndarray:
    """Toutes les distances d'image minimale (i < j), triées"""
    q = np.asarray(q, dtype=np.float64)
    distances = []
    for i in range(q.shape[0] - 1):
        d = minimum_image_displacements(q[i], q[i + 1:], L)
        distances.append(np.sqrt(np.einsum('ij,ij->i', d, d)))
    if not distances:
        return np.zeros(0)
    return np.sort(np.concatenate(distances))
