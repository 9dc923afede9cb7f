"""
Integrator - Boucle NEMD minimale

Avance particules et boîte ensemble sous le flux de fond (forme SLLOD,
moments particuliers), applique la politique de remapping et reconstruit la
liste de cellules à chaque pas.
"""

import logging
import math
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from src.domain.forces import all_pairs_forces, compute_forces, max_relative_deviation
from src.domain.lattice_core import matrix_exponential, wrap_positions
from src.domain.remap import (
    KR_PLANAR_MATRIX,
    RemapEngine,
    generalized_kr_initial_basis,
    generalized_kr_policy,
    kr_planar_initial_basis,
)
from src.domain.tracer import RunTracer
from src.models.data_contracts import (
    Automorphism,
    ConfigParseError,
    DegenerateGridError,
    ForceAccumulator,
    ForceMode,
    GridStatistics,
    KRPlanarPolicy,
    LatticeBasis,
    LeesEdwardsPolicy,
    NoRemapPolicy,
    ParticleSet,
    ReductionPolicy,
    RemapPolicy,
    RunAbortedError,
    RunConfig,
    RunStrategy,
    SimulationState,
    VerificationError,
)

logger = logging.getLogger(__name__)

# Observateur : (pas, instantané, forces, statistiques de grille)
StepObserver = Callable[[int, SimulationState, ForceAccumulator, Optional[GridStatistics]], None]

VERIFICATION_TOLERANCE = 1e-10


# ============================================================================
# CONDITIONS INITIALES
# ============================================================================

def build_initial_lattice(config: RunConfig) -> tuple:
    """
    Base initiale et période KR éventuelle selon la configuration

    Returns:
        Tuple[LatticeBasis, Optional[float]]: (L0, t*)
    """
    side = config.resolved_box_side
    lattice = config.resolved_lattice
    if lattice == "kr_planar":
        return kr_planar_initial_basis(config.flow_rate, side, KR_PLANAR_MATRIX)
    if config.resolved_policy == "generalized_kr":
        return generalized_kr_policy(side)[0], None
    if lattice == "kr_general":
        return generalized_kr_initial_basis(side), None
    return LatticeBasis.cube(side), None


def build_policy(config: RunConfig, t_star: Optional[float] = None) -> RemapPolicy:
    """
    Politique de remapping résolue

    Raises:
        ConfigParseError: Si la politique est incompatible avec le réseau initial
    """
    policy = config.resolved_policy
    if policy == "lees_edwards":
        if config.resolved_lattice != "cubic":
            raise ConfigParseError(0, "lees_edwards exige un réseau initial cubique")
        return LeesEdwardsPolicy(rate=config.flow_rate, box_length=config.resolved_box_side)
    if policy == "kr_planar":
        if t_star is None:
            raise ConfigParseError(0, "kr_planar exige le réseau initial kr_planar")
        return KRPlanarPolicy(automorphism=Automorphism(m=KR_PLANAR_MATRIX), t_star=t_star)
    if policy == "reduction":
        return ReductionPolicy(threshold=config.reduction_threshold)
    if policy == "generalized_kr":
        return generalized_kr_policy(config.resolved_box_side)[1]
    return NoRemapPolicy()


def initial_particles(config: RunConfig, basis: LatticeBasis) -> ParticleSet:
    """
    Sous-réseau cubique perturbé et moments gaussiens

    Les sites sont les centres d'une grille fractionnaire m x m x m de L0
    (m = ceil(N^{1/3}), premiers N sites dans l'ordre lexicographique). Les
    perturbations sont uniformes dans [-perturbation, perturbation] sigma ;
    les moments ont la variance m T et une quantité de mouvement totale nulle.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_particles
    m = max(1, math.ceil(round(n ** (1.0 / 3.0), 9)))
    grid = np.stack(np.meshgrid(*(np.arange(m),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)[:n]
    q = ((grid + 0.5) / m) @ basis.cols.T
    amplitude = config.perturbation * config.sigma
    q = q + rng.uniform(-amplitude, amplitude, size=q.shape)
    p = rng.normal(0.0, math.sqrt(config.mass * config.temperature), size=q.shape)
    if n > 1:
        p = p - p.mean(axis=0)
    return ParticleSet(q=wrap_positions(q, basis), p=p, mass=config.mass)


def initial_state(config: RunConfig, strategy: Optional[Union[str, RunStrategy]] = None) -> SimulationState:
    """
    État initial déterministe d'un run

    Args:
        config: Configuration du run
        strategy: Stratégie de l'état (défaut : celle de la configuration, ds pour both)

    Returns:
        SimulationState: t = 0, forces non encore évaluées

    Raises:
        ConfigParseError: Si politique et réseau initial sont incompatibles
    """
    basis, t_star = build_initial_lattice(config)
    policy = build_policy(config, t_star)
    selected = RunStrategy(strategy) if strategy is not None else config.strategy
    if selected == RunStrategy.BOTH:
        selected = RunStrategy.DYNAMIC_SIZE
    return SimulationState(
        basis=basis,
        particles=initial_particles(config, basis),
        flow=config.flow,
        policy=policy,
        strategy=selected,
        dt=config.dt,
        potential=config.potential,
    )


# ============================================================================
# ÉNERGIES
# ============================================================================

def kinetic_energy(ps: ParticleSet) -> float:
    """Énergie cinétique particulière sum p^2 / 2m"""
    return float(np.sum(ps.p * ps.p) / (2.0 * ps.mass))


def total_energy(state: SimulationState) -> float:
    potential = state.accumulator.potential_energy if state.accumulator is not None else 0.0
    return kinetic_energy(state.particles) + potential


# ============================================================================
# PAS D'INTÉGRATION
# ============================================================================

def evaluate_forces(
    state: SimulationState,
    particles: ParticleSet,
    basis: LatticeBasis,
    mode: ForceMode = ForceMode.FAST,
    fallback_to_all_pairs: bool = False,
    tracer: Optional[RunTracer] = None,
) -> ForceAccumulator:
    """
    Forces pour la stratégie de l'état, avec repli toutes-paires optionnel

    Raises:
        DegenerateGridError: Si la grille est dégénérée et que le repli est désactivé
    """
    try:
        accumulator = compute_forces(particles, basis, state.potential, state.strategy, mode)
    except DegenerateGridError as e:
        if not fallback_to_all_pairs:
            raise
        logger.warning(f"⚠️ {e} - repli toutes-paires au pas {state.step + 1}")
        if tracer is not None:
            tracer.log_degenerate_grid(state.step + 1, e.strategy, e.counts, e.minimum)
            tracer.log_fallback(state.step + 1, e.strategy)
        accumulator = all_pairs_forces(particles, basis, state.potential, mode)
    if tracer is not None:
        tracer.log_forces(state.step + 1, state.strategy.value, accumulator)
    return accumulator


def _kick(p: np.ndarray, forces: np.ndarray, a: np.ndarray, half_dt: float) -> np.ndarray:
    # dp/dt = F - A p
    return p + (forces - p @ a.T) * half_dt


def nemd_step(
    state: SimulationState,
    engine: Optional[RemapEngine] = None,
    mode: ForceMode = ForceMode.FAST,
    fallback_to_all_pairs: bool = False,
    tracer: Optional[RunTracer] = None,
) -> SimulationState:
    """
    Un pas demi-kick / dérive / remap / forces / demi-kick

    La dérive advecte positions et boîte par l'exponentielle exacte e^{A dt}
    puis ajoute le déplacement particulier p dt / m. Les moments particuliers
    ne changent pas lors du repliement ni lors d'un remapping.

    Args:
        state: État courant
        engine: Moteur de remapping (construit depuis state.policy si absent)
        mode: Ordre d'accumulation des forces
        fallback_to_all_pairs: Repli sur l'oracle si la grille est dégénérée
        tracer: Traceur du run

    Returns:
        SimulationState: État au pas suivant, forces évaluées

    Raises:
        DegenerateGridError: Si la grille est dégénérée sans repli
    """
    engine = engine or RemapEngine(state.policy, state.flow)
    a = state.flow.a
    dt = state.dt
    ps = state.particles

    accumulator = state.accumulator
    if accumulator is None:
        accumulator = evaluate_forces(state, ps, state.basis, mode, fallback_to_all_pairs)

    p_half = _kick(ps.p, accumulator.forces, a, 0.5 * dt)

    propagator = matrix_exponential(a, dt)
    basis = LatticeBasis(cols=propagator @ state.basis.cols)
    q = ps.q @ propagator.T + p_half * (dt / ps.mass)
    q = wrap_positions(q, basis)
    t = state.t + dt

    remap_state = state.remap_state
    event = engine.check(basis, t, remap_state)
    if event is not None:
        basis = event.basis
        remap_state = event.state
        q = wrap_positions(q, basis)
        logger.info(
            f"🔄 Remap {event.policy} au pas {state.step + 1} (t = {t:.4f}), "
            f"aspect {event.before.max_aspect:.3f} -> {event.after.max_aspect:.3f}"
        )
        if tracer is not None:
            tracer.log_remap(state.step + 1, event)

    moved = ParticleSet(q=q, p=p_half, mass=ps.mass)
    accumulator = evaluate_forces(state, moved, basis, mode, fallback_to_all_pairs, tracer)
    p_new = _kick(p_half, accumulator.forces, a, 0.5 * dt)

    return SimulationState(
        t=t,
        step=state.step + 1,
        basis=basis,
        particles=ParticleSet(q=q, p=p_new, mass=ps.mass),
        flow=state.flow,
        policy=state.policy,
        remap_state=remap_state,
        strategy=state.strategy,
        dt=dt,
        potential=state.potential,
        accumulator=accumulator,
    )


def run(
    state: SimulationState,
    n_steps: int,
    observers: Iterable[StepObserver] = (),
    mode: ForceMode = ForceMode.FAST,
    fallback_to_all_pairs: bool = False,
    tracer: Optional[RunTracer] = None,
) -> SimulationState:
    """
    Applique nemd_step n_steps fois

    Les observateurs reçoivent chaque instantané après le calcul des forces
    et ne doivent pas le modifier.

    Args:
        state: État initial
        n_steps: Nombre de pas (>= 0)
        observers: Collecteurs appelés à chaque pas
        mode: Ordre d'accumulation des forces
        fallback_to_all_pairs: Repli sur l'oracle si la grille est dégénérée
        tracer: Traceur du run

    Returns:
        SimulationState: État final

    Raises:
        RunAbortedError: Sur grille dégénérée, avec l'indice du pas
    """
    if n_steps < 0:
        raise ValueError(f"n_steps négatif: {n_steps}")
    observers: Sequence[StepObserver] = list(observers)
    engine = RemapEngine(state.policy, state.flow)
    if tracer is not None:
        tracer.log_run_start(state.strategy.value, state.particles.n, n_steps)
    logger.info(
        f"Run {state.strategy.value}: {n_steps} pas, N = {state.particles.n}, politique {state.policy.kind}"
    )

    for _ in range(n_steps):
        try:
            state = nemd_step(state, engine, mode, fallback_to_all_pairs, tracer)
        except DegenerateGridError as e:
            logger.error(f"❌ Grille dégénérée au pas {state.step + 1}: {e}")
            if tracer is not None:
                tracer.log_degenerate_grid(state.step + 1, e.strategy, e.counts, e.minimum)
                tracer.log_error("Integrator", type(e).__name__, str(e))
            raise RunAbortedError(state.step + 1, e) from e
        for observer in observers:
            observer(state.step, state, state.accumulator, state.accumulator.grid)

    if tracer is not None:
        tracer.log_run_end(state.step, state.remap_state.n_remaps)
    logger.info(f"✅ Run terminé au pas {state.step} (t = {state.t:.4f}, {state.remap_state.n_remaps} remaps)")
    return state


# ============================================================================
# VÉRIFICATION PAR L'ORACLE
# ============================================================================

class VerificationObserver:
    """
    Compare à chaque pas les forces de la liste de cellules à l'oracle toutes-paires

    Lève VerificationError au premier écart relatif supérieur à la tolérance.
    """

    def __init__(self, tolerance: float = VERIFICATION_TOLERANCE, tracer: Optional[RunTracer] = None):
        self.tolerance = tolerance
        self.tracer = tracer
        self.max_deviation = 0.0
        self.steps_checked = 0

    def __call__(self, step: int, state: SimulationState, accumulator: ForceAccumulator,
                 grid: Optional[GridStatistics]) -> None:
        reference = all_pairs_forces(state.particles, state.basis, state.potential, ForceMode.VERIFICATION)
        deviation, particle = max_relative_deviation(accumulator.forces, reference.forces)
        self.max_deviation = max(self.max_deviation, deviation)
        self.steps_checked += 1
        passed = deviation < self.tolerance
        if self.tracer is not None:
            self.tracer.log_verification(step, state.strategy.value, deviation, passed, particle)
        if not passed:
            raise VerificationError(step, particle, deviation, state.strategy.value)
