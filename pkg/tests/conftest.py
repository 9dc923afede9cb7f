"""
Fixtures partagées : bases déformées aléatoires, ensembles de particules,
remise à zéro des singletons (collecteur de métriques, cache de la factory).
"""

import math

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from src.domain.cell_list_factory import CellListFactory
from src.domain.lattice_core import wrap_positions
from src.infrastructure.cell_lists.dynamic_offset import do_counts
from src.infrastructure.cell_lists.dynamic_size import ds_counts
from src.infrastructure.monitoring import reset_metrics_collector
from src.infrastructure.settings import get_settings
from src.models.data_contracts import LatticeBasis, ParticleSet, WCAPotential

# Potentiel dont le rayon de coupure vaut 1 (à l'arrondi près)
UNIT_CUTOFF_SIGMA = 2.0 ** (-1.0 / 6.0)


def make_deformed_basis(rng: np.random.Generator, side: float = 7.0, d_cut: float = 2.0 ** (1.0 / 6.0),
                        skew: float = 0.45) -> LatticeBasis:
    """
    Base tournée aléatoirement, étirée et cisaillée dans des bornes de remapping

    L = R U avec U triangulaire supérieure (diagonale dans [0.85, 1.2] side,
    termes hors diagonale bornés par skew), ce qui garde max_aspect autour de 2.
    """
    for _ in range(100):
        rotation = special_ortho_group.rvs(3, random_state=int(rng.integers(2 ** 31)))
        diagonal = side * rng.uniform(0.85, 1.2, size=3)
        upper = np.diag(diagonal)
        upper[0, 1] = rng.uniform(-skew, skew) * diagonal[0]
        upper[0, 2] = rng.uniform(-skew, skew) * diagonal[0]
        upper[1, 2] = rng.uniform(-skew, skew) * diagonal[1]
        basis = LatticeBasis(cols=rotation @ upper)
        if min(ds_counts(basis, d_cut)) >= 3 and min(do_counts(basis, d_cut)) >= 4:
            return basis
    raise RuntimeError("no admissible deformed basis")


def make_lattice_particles(rng: np.random.Generator, basis: LatticeBasis, n: int,
                           jitter: float = 0.08) -> ParticleSet:
    """N sites distincts d'une grille fractionnaire m^3, perturbés de jitter pas de grille"""
    m = math.ceil(round(n ** (1.0 / 3.0), 9))
    grid = np.stack(np.meshgrid(*(np.arange(m),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = grid[rng.choice(grid.shape[0], size=n, replace=False)]
    lam = (sites + 0.5 + rng.uniform(-jitter, jitter, size=(n, 3))) / m
    q = wrap_positions(lam @ basis.cols.T, basis)
    return ParticleSet(q=q, p=rng.normal(size=(n, 3)))


def make_uniform_particles(rng: np.random.Generator, basis: LatticeBasis, n: int) -> ParticleSet:
    q = wrap_positions(rng.uniform(0.0, 1.0, size=(n, 3)) @ basis.cols.T, basis)
    return ParticleSet(q=q, p=np.zeros((n, 3)))


@pytest.fixture(autouse=True)
def reset_singletons():
    """Isolation des tests : collecteur, cache d'instances et réglages"""
    reset_metrics_collector()
    CellListFactory.clear_cache()
    get_settings.cache_clear()
    yield
    reset_metrics_collector()
    CellListFactory.clear_cache()
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def potential():
    return WCAPotential()


@pytest.fixture
def unit_cutoff_potential():
    return WCAPotential(sigma=UNIT_CUTOFF_SIGMA)


@pytest.fixture
def cube10():
    return LatticeBasis.cube(10.0)


@pytest.fixture
def sheared_cube():
    """Cube a = 10 cisaillé de a/2 (v2 = (5, 10, 0))"""
    cols = 10.0 * np.eye(3)
    cols[0, 1] = 5.0
    return LatticeBasis(cols=cols)


@pytest.fixture
def deformed_basis_factory():
    return make_deformed_basis


@pytest.fixture
def lattice_particles_factory():
    return make_lattice_particles


@pytest.fixture
def uniform_particles_factory():
    return make_uniform_particles
