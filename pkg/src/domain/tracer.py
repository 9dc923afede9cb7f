"""
Service de Traçabilité (Tracing) - Observabilité d'un run NEMD

Ce module implémente le traçage léger des événements rares d'un run
(remappings, grilles dégénérées, replis toutes-paires, vérifications) pour
le débogage et la collecte de métriques.
"""

import logging
from datetime import datetime
from typing import Any, Dict, Optional

from src.infrastructure.monitoring import get_metrics_collector
from src.models.data_contracts import ForceAccumulator, RemapEvent, Trace, TraceStep

logger = logging.getLogger(__name__)


class RunTracer:
    """
    Service de traçage d'un run

    Les étapes sont conservées en mémoire dans l'ordre d'émission et
    transmises au MetricsCollector au fil de l'eau.
    """

    def __init__(self, run_name: str = "run", collect_metrics: bool = True):
        """
        Initialise le service de traçage pour un run donné

        Args:
            run_name: Nom du run (commande CLI, stratégie)
            collect_metrics: Transmettre les étapes au collecteur Prometheus
        """
        self.run_name = run_name
        self.collect_metrics = collect_metrics
        self.trace: Trace = []
        self.logger = logging.getLogger(f"{__name__}.{run_name}")

    def log_step(
        self,
        component: str,
        event: str,
        details: Optional[Dict[str, Any]] = None
    ) -> None:
        """
        Enregistre une étape de traçage

        Args:
            component: Nom du composant (Integrator/RemapEngine/CellList/etc.)
            event: Type d'événement (run_start/remap/fallback/verification/error)
            details: Détails optionnels spécifiques à l'étape
        """
        try:
            trace_step = TraceStep(
                timestamp=datetime.now(),
                component=component,
                event=event,
                details=details or {}
            )
            self.trace.append(trace_step)

            if self.collect_metrics:
                self._collect_metrics_from_trace_step(component, event, details or {})

            self.logger.debug(f"Trace step recorded: {component}.{event} - {details or {}}")

        except Exception as e:
            # Le tracing est auxiliaire : ne jamais casser la boucle de simulation
            self.logger.error(f"Failed to log trace step {component}.{event}: {str(e)}")

    def log_run_start(self, strategy: str, n_particles: int, n_steps: int) -> None:
        self.log_step(
            component="Integrator",
            event="run_start",
            details={"strategy": strategy, "n_particles": n_particles, "n_steps": n_steps}
        )

    def log_forces(self, step: int, strategy: str, accumulator: ForceAccumulator) -> None:
        """Log une évaluation de forces (pas d'intégration)"""
        details = {
            "step": step,
            "strategy": strategy,
            "pair_checks": accumulator.pair_checks,
            "pairs_within_cutoff": accumulator.pairs_within_cutoff,
        }
        if accumulator.grid is not None:
            details["build_seconds"] = accumulator.grid.build_seconds
            details["scan_seconds"] = accumulator.grid.scan_seconds
        if accumulator.pair_checks:
            details["efficiency"] = accumulator.empirical_efficiency
        # Pas de TraceStep par pas : seules les métriques sont mises à jour
        if self.collect_metrics:
            self._collect_metrics_from_trace_step("Forces", "forces", details)

    def log_remap(self, step: int, event: RemapEvent) -> None:
        self.log_step(
            component="RemapEngine",
            event="remap",
            details={
                "step": step,
                "t": event.t,
                "policy": event.policy,
                "automorphism": [list(row) for row in event.automorphism.m],
                "aspect_before": event.before.max_aspect,
                "aspect_after": event.after.max_aspect,
            }
        )

    def log_degenerate_grid(self, step: int, strategy: str, counts, minimum: int) -> None:
        self.log_step(
            component="CellList",
            event="degenerate_grid",
            details={"step": step, "strategy": strategy, "counts": list(counts), "minimum": minimum}
        )

    def log_fallback(self, step: int, strategy: str) -> None:
        """Log un repli sur l'oracle toutes-paires"""
        self.log_step(
            component="Forces",
            event="fallback",
            details={"step": step, "strategy": strategy, "fallback": "all_pairs"}
        )

    def log_verification(self, step: int, strategy: str, deviation: float, passed: bool, particle: int = -1) -> None:
        self.log_step(
            component="Verifier",
            event="verification" if passed else "verification_error",
            details={
                "step": step,
                "strategy": strategy,
                "deviation": deviation,
                "particle": particle,
                "error_type": None if passed else "VerificationError",
            }
        )

    def log_error(self, component: str, error_type: str, error_message: str) -> None:
        """Log une erreur dans le run"""
        self.log_step(
            component=component,
            event="error",
            details={"error_type": error_type, "error_message": error_message}
        )

    def log_run_end(self, steps_done: int, n_remaps: int) -> None:
        self.log_step(
            component="Integrator",
            event="run_end",
            details={"steps_done": steps_done, "n_remaps": n_remaps, "total_trace_steps": len(self.trace) + 1}
        )

    def events(self, event: str) -> Trace:
        """Étapes de trace d'un type donné"""
        return [step for step in self.trace if step.event == event]

    def _collect_metrics_from_trace_step(
        self,
        component: str,
        event: str,
        details: Dict[str, Any]
    ) -> None:
        """
        Collecte les métriques Prometheus à partir d'une étape de trace

        Args:
            component: Composant source de l'événement
            event: Type d'événement
            details: Détails de l'événement
        """
        try:
            metrics_collector = get_metrics_collector()

            # ===================================================================
            # MÉTRIQUES DE FORCES
            # ===================================================================

            if event == "forces":
                metrics_collector.record_step(
                    strategy=details.get("strategy", "unknown"),
                    pair_checks=details.get("pair_checks", 0),
                    pairs_within_cutoff=details.get("pairs_within_cutoff", 0),
                    build_seconds=details.get("build_seconds"),
                    scan_seconds=details.get("scan_seconds"),
                )
                if "efficiency" in details:
                    metrics_collector.update_search_efficiency(details["strategy"], details["efficiency"])

            # ===================================================================
            # MÉTRIQUES DE GÉOMÉTRIE
            # ===================================================================

            elif event == "remap":
                metrics_collector.record_remap(policy=details.get("policy", "unknown"))

            elif event == "degenerate_grid":
                metrics_collector.record_degenerate_grid(strategy=details.get("strategy", "unknown"))

            # ===================================================================
            # MÉTRIQUES DE VÉRIFICATION
            # ===================================================================

            elif event == "verification_error":
                metrics_collector.record_verification_failure(strategy=details.get("strategy", "unknown"))

        except Exception as e:
            logger.warning(f"Failed to collect metrics from trace step: {str(e)}")


class TracerFactory:
    """Factory pour créer des instances de RunTracer"""

    @staticmethod
    def create_tracer(run_name: str = "run", collect_metrics: bool = True) -> RunTracer:
        """
        Crée une nouvelle instance de RunTracer

        Args:
            run_name: Nom du run
            collect_metrics: Transmettre au collecteur Prometheus

        Returns:
            Instance de RunTracer configurée
        """
        return RunTracer(run_name, collect_metrics)
