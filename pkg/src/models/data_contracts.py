"""Data Contracts - Modèles Pydantic pour la géométrie du réseau, les particules et la configuration des runs NEMD"""

import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============================================================================
# CONSTANTES ET HELPERS DE VALIDATION NUMÉRIQUE
# ============================================================================

FLOW_TRACE_TOLERANCE = 1e-12
CONFIG_TRACE_TOLERANCE = 1e-9
WRAP_TOLERANCE = 1e-9

IntMatrix = Tuple[Tuple[int, int, int], Tuple[int, int, int], Tuple[int, int, int]]


def _frozen_array(value: Any, shape: Tuple[int, ...], name: str) -> np.ndarray:
    """
    Convertit une valeur en tableau float64 en lecture seule

    Args:
        value: Liste, tuple ou ndarray
        shape: Forme attendue (-1 pour une dimension libre)
        name: Nom du champ pour les messages d'erreur

    Returns:
        np.ndarray: Copie float64 non modifiable

    Raises:
        ValueError: Si la forme ou les valeurs sont invalides
    """
    array = np.array(value, dtype=np.float64, copy=True)
    if array.ndim != len(shape) or any(s != -1 and s != d for s, d in zip(shape, array.shape)):
        raise ValueError(f"{name}: forme {array.shape} invalide, attendue {shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name}: valeurs non finies")
    array.setflags(write=False)
    return array


def integer_det(m: IntMatrix) -> int:
    """Déterminant exact d'une matrice entière 3x3 (arithmétique Python)"""
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


# ============================================================================
# GÉOMÉTRIE : FLUX, RÉSEAU, PARTICULES
# ============================================================================

class FlowMatrix(BaseModel):
    """
    Matrice de flux A du champ de vitesse de fond u(x) = A x

    La trace doit être nulle : e^{At} conserve alors le volume de la boîte.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a: np.ndarray = Field(..., description="Matrice 3x3 (unités 1/temps)")

    @field_validator('a', mode='before')
    @classmethod
    def convert_matrix(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, (3, 3), "flow")

    @field_validator('a')
    @classmethod
    def validate_traceless(cls, v: np.ndarray) -> np.ndarray:
        """Validation de l'incompressibilité"""
        trace = float(np.trace(v))
        if abs(trace) >= FLOW_TRACE_TOLERANCE:
            raise ValueError(f"Flux compressible: trace = {trace:.3e}")
        return v

    @classmethod
    def zero(cls) -> "FlowMatrix":
        return cls(a=np.zeros((3, 3)))

    @classmethod
    def shear(cls, rate: float) -> "FlowMatrix":
        """Cisaillement plan : u_x = rate * y"""
        a = np.zeros((3, 3))
        a[0, 1] = rate
        return cls(a=a)

    @classmethod
    def uniaxial(cls, rate: float) -> "FlowMatrix":
        """Élongation uniaxiale diag(rate, -rate/2, -rate/2)"""
        return cls(a=np.diag([rate, -rate / 2.0, -rate / 2.0]))

    @classmethod
    def planar_elongation(cls, rate: float) -> "FlowMatrix":
        """Élongation plane diag(rate, -rate, 0)"""
        return cls(a=np.diag([rate, -rate, 0.0]))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.a)

    @property
    def is_diagonal(self) -> bool:
        return not np.any(self.a - np.diag(np.diag(self.a)))


class LatticeBasis(BaseModel):
    """
    Base du réseau périodique : les colonnes sont les vecteurs v1, v2, v3

    Les images d'une particule q sont situées en q + L n, n entier.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cols: np.ndarray = Field(..., description="Matrice 3x3 dont les colonnes sont les vecteurs de boîte")

    @field_validator('cols', mode='before')
    @classmethod
    def convert_matrix(cls, v: Any) -> np.ndarray:
        if isinstance(v, LatticeBasis):
            v = v.cols
        return _frozen_array(v, (3, 3), "basis")

    @field_validator('cols')
    @classmethod
    def validate_orientation(cls, v: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(v, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("Vecteur de base nul")
        det = float(np.linalg.det(v))
        if not det > 0.0:
            raise ValueError(f"Base non directe ou dégénérée: det = {det:.3e}")
        return v

    @classmethod
    def cube(cls, side: float) -> "LatticeBasis":
        return cls(cols=side * np.eye(3))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.cols))

    def column(self, index: int) -> np.ndarray:
        return self.cols[:, index]


class ParticleSet(BaseModel):
    """
    Positions cartésiennes repliées dans la cellule unité et moments particuliers
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: np.ndarray = Field(..., description="Positions N x 3")
    p: np.ndarray = Field(..., description="Moments particuliers N x 3")
    mass: float = Field(default=1.0, gt=0.0, description="Masse commune des particules")

    @field_validator('q', 'p', mode='before')
    @classmethod
    def convert_vectors(cls, v: Any) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.size == 0:
            array = array.reshape(0, 3)
        return _frozen_array(array, (-1, 3), "particles")

    @model_validator(mode='after')
    def validate_shapes(self) -> "ParticleSet":
        if self.q.shape != self.p.shape:
            raise ValueError(f"Formes incohérentes: q {self.q.shape} / p {self.p.shape}")
        return self

    @property
    def n(self) -> int:
        return int(self.q.shape[0])

    def is_wrapped_in(self, basis: LatticeBasis, tolerance: float = WRAP_TOLERANCE) -> bool:
        """Vérifie que toutes les coordonnées fractionnaires sont dans [0, 1)"""
        if self.n == 0:
            return True
        lam = np.linalg.solve(basis.cols, self.q.T).T
        return bool(np.all(lam >= -tolerance) and np.all(lam < 1.0 + tolerance))


class Automorphism(BaseModel):
    """
    Changement de base unimodulaire M (entiers, det = +1 exactement)
    """
    model_config = ConfigDict(frozen=True)

    m: IntMatrix = Field(..., description="Matrice entière 3x3")

    @field_validator('m', mode='before')
    @classmethod
    def convert_matrix(cls, v: Any) -> IntMatrix:
        rows = np.asarray(v)
        if rows.shape != (3, 3):
            raise ValueError(f"Automorphisme: forme {rows.shape} invalide")
        if not np.all(np.equal(np.mod(rows, 1), 0)):
            raise ValueError("Automorphisme: coefficients non entiers")
        return tuple(tuple(int(x) for x in row) for row in rows.tolist())

    @field_validator('m')
    @classmethod
    def validate_unimodular(cls, v: IntMatrix) -> IntMatrix:
        det = integer_det(v)
        if det != 1:
            raise ValueError(f"Automorphisme: det = {det}, attendu 1")
        return v

    @classmethod
    def identity(cls) -> "Automorphism":
        return cls(m=((1, 0, 0), (0, 1, 0), (0, 0, 1)))

    @property
    def is_identity(self) -> bool:
        return self.m == ((1, 0, 0), (0, 1, 0), (0, 0, 1))

    def as_array(self) -> np.ndarray:
        return np.array(self.m, dtype=np.float64)

    def compose(self, other: "Automorphism") -> "Automorphism":
        """Produit self @ other en arithmétique entière"""
        product = [[sum(self.m[i][k] * other.m[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
        return Automorphism(m=product)


# ============================================================================
# POLITIQUES DE REMAPPING
# ============================================================================

class NoRemapPolicy(BaseModel):
    """Aucun remapping (flux nul)"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["none"] = "none"


class LeesEdwardsPolicy(BaseModel):
    """Réinitialisation Lees-Edwards toutes les demi-périodes de réseau"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["lees_edwards"] = "lees_edwards"
    rate: float = Field(..., description="Taux de cisaillement")
    box_length: float = Field(..., gt=0.0, description="Côté a de la boîte cubique initiale")


class KRPlanarPolicy(BaseModel):
    """Réinitialisation Kraynik-Reinelt périodique pour l'élongation plane"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["kr_planar"] = "kr_planar"
    automorphism: Automorphism = Field(..., description="M tel que e^{At*} L0 = L0 M")
    t_star: float = Field(..., gt=0.0, description="Période de réinitialisation")


class ReductionPolicy(BaseModel):
    """Réduction de base gloutonne déclenchée par le rapport d'aspect"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["reduction"] = "reduction"
    threshold: float = Field(default=2.0, gt=1.0, description="Seuil de max_aspect déclenchant la réduction")


class GeneralizedKRPolicy(BaseModel):
    """
    Étirement borné par une paire d'automorphismes commutants (flux diagonaux)

    e^{diag(first_stretch)} L0 = L0 first et de même pour second. L'étirement
    accumulé t diag(A) est ramené au point le plus proche du réseau engendré
    par les deux vecteurs d'étirement, la base restant e^{diag(reste)} L0.
    """
    model_config = ConfigDict(frozen=True)
    kind: Literal["generalized_kr"] = "generalized_kr"
    reference: LatticeBasis = Field(..., description="Base L0 des automorphismes")
    first: Automorphism
    second: Automorphism
    first_stretch: Tuple[float, float, float] = Field(..., description="log des valeurs propres de first")
    second_stretch: Tuple[float, float, float] = Field(..., description="log des valeurs propres de second")
    stretch_radius: float = Field(..., gt=0.0, description="Rayon de recouvrement du réseau des étirements")
    aspect_bound: float = Field(..., gt=1.0, description="Borne de max_aspect sur toute la trajectoire")

    @model_validator(mode='after')
    def validate_stretches(self) -> "GeneralizedKRPolicy":
        for stretch in (self.first_stretch, self.second_stretch):
            if abs(sum(stretch)) > CONFIG_TRACE_TOLERANCE:
                raise ValueError(f"Étirement de trace non nulle: {stretch}")
        if np.linalg.norm(np.cross(self.first_stretch, self.second_stretch)) < 1e-9:
            raise ValueError("Étirements colinéaires : la paire ne borne pas la déformation")
        return self


RemapPolicy = Annotated[
    Union[NoRemapPolicy, LeesEdwardsPolicy, KRPlanarPolicy, ReductionPolicy, GeneralizedKRPolicy],
    Field(discriminator="kind"),
]


class RemapState(BaseModel):
    """État accumulé par la politique de remapping au cours du run"""
    model_config = ConfigDict(frozen=True)

    last_reset_time: float = Field(default=0.0, description="Instant de la dernière réinitialisation KR")
    n_remaps: int = Field(default=0, ge=0)
    accumulated: Automorphism = Field(default_factory=Automorphism.identity)
    stretch_shift: Tuple[int, int] = Field(default=(0, 0), description="Puissances de la paire déjà appliquées")


class DeformationMetrics(BaseModel):
    """Diagnostics de déformation de la boîte"""
    model_config = ConfigDict(frozen=True)

    min_height: float
    max_aspect: float
    tilt_angles: Tuple[float, float, float] = Field(..., description="Inclinaisons en degrés")

    @property
    def max_tilt(self) -> float:
        return max(self.tilt_angles)


class RemapEvent(BaseModel):
    """Remapping appliqué par le moteur de politique"""
    model_config = ConfigDict(frozen=True)

    policy: str
    t: float
    automorphism: Automorphism
    basis: LatticeBasis
    before: DeformationMetrics
    after: DeformationMetrics
    state: RemapState


# ============================================================================
# POTENTIEL ET FORCES
# ============================================================================

class WCAPotential(BaseModel):
    """
    Potentiel WCA : Lennard-Jones tronqué en 2^{1/6} sigma et décalé de +epsilon
    """
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(default=1.0, gt=0.0)
    sigma: float = Field(default=1.0, gt=0.0)

    @property
    def d_cut(self) -> float:
        return 2.0 ** (1.0 / 6.0) * self.sigma

    def pair_terms(self, r2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Énergie et facteur de force pour des distances au carré < d_cut^2

        Args:
            r2: Distances au carré

        Returns:
            (énergie, coef) avec F_i = -coef * (q_j - q_i)
        """
        sr2 = self.sigma * self.sigma / r2
        sr6 = sr2 * sr2 * sr2
        sr12 = sr6 * sr6
        energy = 4.0 * self.epsilon * (sr12 - sr6) + self.epsilon
        coef = 24.0 * self.epsilon * (2.0 * sr12 - sr6) / r2
        return energy, coef

    def energy(self, r: float) -> float:
        if r >= self.d_cut:
            return 0.0
        energy, _ = self.pair_terms(np.array([r * r]))
        return float(energy[0])


class CellListStrategy(str, Enum):
    """Stratégies de liste de cellules"""
    DYNAMIC_SIZE = "ds"
    DYNAMIC_OFFSET = "do"


class RunStrategy(str, Enum):
    """Sélecteur de stratégie d'un run"""
    DYNAMIC_SIZE = "ds"
    DYNAMIC_OFFSET = "do"
    BOTH = "both"
    ALL_PAIRS = "all_pairs"


class ForceMode(str, Enum):
    """Ordre d'accumulation des forces"""
    FAST = "fast"
    VERIFICATION = "verification"


class GridStatistics(BaseModel):
    """Statistiques d'une grille construite pour un pas"""
    model_config = ConfigDict(frozen=True)

    strategy: str
    counts: Tuple[int, int, int]
    neighborhood_volume: float
    average_count: float
    build_seconds: float = 0.0
    scan_seconds: float = 0.0


class ForceAccumulator(BaseModel):
    """
    Résultat d'une évaluation de forces
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    forces: np.ndarray = Field(..., description="Forces N x 3")
    potential_energy: float = 0.0
    pair_checks: int = Field(default=0, ge=0, description="Nombre d'évaluations de distance")
    pairs_within_cutoff: int = Field(default=0, ge=0)
    grid: Optional[GridStatistics] = None

    @field_validator('forces', mode='before')
    @classmethod
    def convert_forces(cls, v: Any) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.size == 0:
            array = array.reshape(0, 3)
        return _frozen_array(array, (-1, 3), "forces")

    @classmethod
    def empty(cls, n: int) -> "ForceAccumulator":
        return cls(forces=np.zeros((n, 3)))

    @property
    def net_force(self) -> np.ndarray:
        return self.forces.sum(axis=0)

    @property
    def empirical_efficiency(self) -> float:
        return self.pairs_within_cutoff / self.pair_checks if self.pair_checks else 0.0


# ============================================================================
# ÉTAT DE SIMULATION
# ============================================================================

class SimulationState(BaseModel):
    """
    État complet d'une simulation NEMD à un instant donné
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t: float = Field(default=0.0, ge=0.0)
    step: int = Field(default=0, ge=0)
    basis: LatticeBasis
    particles: ParticleSet
    flow: FlowMatrix
    policy: RemapPolicy = Field(default_factory=NoRemapPolicy)
    remap_state: RemapState = Field(default_factory=RemapState)
    strategy: RunStrategy = RunStrategy.DYNAMIC_SIZE
    dt: float = Field(default=0.001, gt=0.0)
    potential: WCAPotential = Field(default_factory=WCAPotential)
    accumulator: Optional[ForceAccumulator] = None

    @model_validator(mode='after')
    def validate_wrapped(self) -> "SimulationState":
        if not self.particles.is_wrapped_in(self.basis):
            raise ValueError("Positions hors de la cellule unité")
        if self.strategy == RunStrategy.BOTH:
            raise ValueError("Un état de simulation porte une seule stratégie")
        return self


# ============================================================================
# MÉTRIQUES D'EFFICACITÉ
# ============================================================================

class EfficiencyRecord(BaseModel):
    """Enregistrement d'efficacité pour un pas"""
    model_config = ConfigDict(frozen=True)

    step: int
    t: float
    min_height: float
    max_aspect: float
    v_ds: float
    v_do_avg: float
    eff_ds: float
    eff_do: float
    checks_ds: Optional[int] = None
    checks_do: Optional[int] = None
    wall_ds: Optional[float] = None
    wall_do: Optional[float] = None
    remapped: bool = False


@dataclass
class EfficiencyTrace:
    """Trace d'efficacité d'un run (un enregistrement par pas)"""
    d_cut: float
    records: List[EfficiencyRecord] = field(default_factory=list)

    def append(self, record: EfficiencyRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)


class EfficiencySummary(BaseModel):
    """Moyennes long terme après burn-in"""
    model_config = ConfigDict(frozen=True)

    n_records: int
    burn_in: int
    mean_eff_ds: float
    mean_eff_do: float
    mean_v_ds: float
    mean_v_do: float
    predicted_ratio: float = Field(..., description="mean V_DO / mean V_DS")
    wall_ratio: Optional[float] = Field(default=None, description="Temps total DO / temps total DS")
    checks_ratio: Optional[float] = None
    ordered_fraction: float = Field(default=1.0, description="Fraction des pas déformés avec eff_DO >= eff_DS")


# ============================================================================
# CONFIGURATION D'UN RUN
# ============================================================================

class FlowPreset(str, Enum):
    """Préréglages de flux reconnus par le parseur"""
    ZERO = "zero"
    SHEAR = "shear"
    UNIAXIAL = "uniaxial"
    PLANAR_ELONGATION = "planar_elongation"
    CUSTOM = "custom"


class RunConfig(BaseModel):
    """
    Configuration complète d'un run (fichier clé = valeur)
    """
    model_config = ConfigDict(frozen=True)

    flow: FlowMatrix = Field(default_factory=lambda: FlowMatrix.uniaxial(0.05))
    flow_preset: FlowPreset = FlowPreset.UNIAXIAL
    flow_rate: float = 0.05
    box_side: Optional[float] = Field(default=None, gt=0.0, description="Côté de la boîte initiale")
    density: float = Field(default=0.8, gt=0.0)
    n_particles: int = Field(default=1728, gt=0)
    epsilon: float = Field(default=1.0, gt=0.0)
    sigma: float = Field(default=1.0, gt=0.0)
    mass: float = Field(default=1.0, gt=0.0)
    temperature: float = Field(default=1.0, ge=0.0)
    dt: float = Field(default=0.001, gt=0.0)
    n_steps: int = Field(default=10000, ge=0)
    strategy: RunStrategy = RunStrategy.BOTH
    policy: Literal["auto", "none", "lees_edwards", "kr_planar", "reduction", "generalized_kr"] = "auto"
    reduction_threshold: float = Field(default=2.0, gt=1.0)
    initial_lattice: Literal["auto", "cubic", "kr_planar", "kr_general"] = "auto"
    seed: int = 2024
    output: str = "trace.csv"
    burn_in_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    force_mode: ForceMode = ForceMode.FAST
    fallback_to_all_pairs: bool = False
    perturbation: float = Field(default=0.05, ge=0.0, description="Amplitude de perturbation en unités de sigma")
    bench_cells: float = Field(default=10.0, ge=4.0, description="Côté de la boîte du bench en unités de d_cut")
    bench_dt: float = Field(default=0.05, gt=0.0)

    @property
    def resolved_box_side(self) -> float:
        if self.box_side is not None:
            return self.box_side
        return (self.n_particles / self.density) ** (1.0 / 3.0)

    @property
    def burn_in_steps(self) -> int:
        return int(math.floor(self.burn_in_fraction * self.n_steps))

    @property
    def potential(self) -> WCAPotential:
        return WCAPotential(epsilon=self.epsilon, sigma=self.sigma)

    @property
    def resolved_policy(self) -> str:
        if self.policy != "auto":
            return self.policy
        return {
            FlowPreset.ZERO: "none",
            FlowPreset.SHEAR: "lees_edwards",
            FlowPreset.PLANAR_ELONGATION: "kr_planar",
            FlowPreset.UNIAXIAL: "generalized_kr",
        }.get(self.flow_preset, "reduction")

    @property
    def resolved_lattice(self) -> str:
        if self.initial_lattice != "auto":
            return self.initial_lattice
        return {
            "none": "cubic",
            "lees_edwards": "cubic",
            "kr_planar": "kr_planar",
        }.get(self.resolved_policy, "kr_general")

    @model_validator(mode='after')
    def validate_policy_matches_flow(self) -> "RunConfig":
        policy = self.resolved_policy
        if policy == "lees_edwards" and self.flow_preset != FlowPreset.SHEAR:
            raise ValueError("La politique lees_edwards exige le préréglage shear")
        if policy == "kr_planar" and self.flow_preset != FlowPreset.PLANAR_ELONGATION:
            raise ValueError("La politique kr_planar exige le préréglage planar_elongation")
        if policy == "kr_planar" and self.flow_rate <= 0.0:
            raise ValueError("kr_planar exige un taux d'élongation positif")
        if policy == "none" and not self.flow.is_zero:
            raise ValueError("La politique none n'est valide que pour un flux nul")
        if policy == "generalized_kr" and not self.flow.is_diagonal:
            raise ValueError("La politique generalized_kr exige un flux diagonal")
        if policy == "generalized_kr" and self.initial_lattice not in ("auto", "kr_general"):
            raise ValueError("La politique generalized_kr exige le réseau initial kr_general")
        return self


# ============================================================================
# JOURNAL DE TRACE
# ============================================================================

class TraceStep(BaseModel):
    """
    Étape unique de traçage d'un run

    Chaque TraceStep représente un événement atomique (remapping, repli,
    vérification) pour le débogage et la collecte de métriques.
    """
    timestamp: datetime = Field(default_factory=datetime.now, description="Horodatage de l'étape")
    component: str = Field(..., description="Composant responsable (Integrator/RemapEngine/CellList/Forces/Verifier/Bench)")
    event: str = Field(..., description="Type d'événement (run_start/remap/degenerate_grid/fallback/verification/run_end)")
    details: Dict[str, Any] = Field(default_factory=dict, description="Détails spécifiques de l'étape")

    @field_validator('component')
    @classmethod
    def validate_component(cls, v: str) -> str:
        allowed_components = {'Integrator', 'RemapEngine', 'CellList', 'Forces', 'Verifier', 'Bench', 'CLI'}
        if v not in allowed_components:
            raise ValueError(f"Composant de trace inconnu: {v}")
        return v


Trace = List[TraceStep]


# ============================================================================
# EXCEPTIONS PERSONNALISÉES
# ============================================================================

class FlowcellError(Exception):
    """Exception de base du projet"""


class DegenerateGridError(FlowcellError):
    """
    Levée quand une grille ne peut pas être construite sans aliasing

    Le dynamic-size exige c_i >= 3, le dynamic-offset l_i >= 4.
    """
    def __init__(self, strategy: str, counts: Tuple[int, int, int], minimum: int):
        self.strategy = strategy
        self.counts = tuple(int(c) for c in counts)
        self.minimum = minimum
        super().__init__(str(self))

    def __str__(self) -> str:
        return f"Degenerate {self.strategy} grid: counts {self.counts} below minimum {self.minimum}"


class LeesEdwardsMismatchError(FlowcellError):
    """Base qui n'a pas la forme d'un cube cisaillé"""


class RemapBoundError(FlowcellError):
    """La réduction n'a pas ramené max_aspect sous le seuil de la politique"""
    def __init__(self, max_aspect: float, threshold: float):
        self.max_aspect = max_aspect
        self.threshold = threshold
        super().__init__(str(self))

    def __str__(self) -> str:
        return f"Reduced basis keeps max_aspect {self.max_aspect:.4f} above threshold {self.threshold}"


class EmptyWindowError(FlowcellError):
    """Aucun enregistrement après le burn-in"""


class ConfigParseError(FlowcellError):
    """Erreur de configuration avec numéro de ligne (0 = validation globale)"""
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        self.message = message
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line_number:
            return f"line {self.line_number}: {self.message}"
        return self.message


class FlowTraceError(ConfigParseError):
    """Flux compressible rejeté par le parseur"""


class RunAbortedError(FlowcellError):
    """Run interrompu au pas indiqué"""
    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(str(self))

    def __str__(self) -> str:
        return f"Run aborted at step {self.step}: {self.cause}"


class VerificationError(FlowcellError):
    """Écart entre forces de liste de cellules et oracle toutes-paires"""
    def __init__(self, step: int, particle: int, deviation: float, strategy: str):
        self.step = step
        self.particle = particle
        self.deviation = deviation
        self.strategy = strategy
        super().__init__(str(self))

    def __str__(self) -> str:
        return (
            f"Verification failed for {self.strategy} at step {self.step}, "
            f"particle {self.particle}: relative deviation {self.deviation:.3e}"
        )
