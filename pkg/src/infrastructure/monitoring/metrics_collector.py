"""
Collecteur de Métriques Prometheus pour l'observabilité des runs NEMD

Ce module collecte les quantités clés d'un run (pas intégrés, évaluations
de distance, paires en interaction, remappings, grilles dégénérées, temps de
construction et de balayage) au format Prometheus/OpenMetrics.
"""

import logging
from typing import Optional

from prometheus_client import Counter, Histogram, Info, Gauge, CollectorRegistry, generate_latest

logger = logging.getLogger(__name__)

# Variables globales pour le pattern singleton
_metrics_collector: Optional['MetricsCollector'] = None
_registry_in_use: Optional[CollectorRegistry] = None


class MetricsCollector:
    """
    Collecteur centralisé de métriques Prometheus

    Métriques collectées:
    - Pas d'intégration (count par stratégie)
    - Évaluations de distance et paires dans la coupure
    - Temps de construction de grille et de balayage
    - Remappings (count par politique) et grilles dégénérées
    - Efficacité de recherche courante par stratégie
    - Échecs de vérification
    """

    def __init__(self, registry: Optional[CollectorRegistry] = None):
        """
        Initialise le collecteur avec toutes les métriques Prometheus

        Args:
            registry: Registry Prometheus personnalisé (optionnel)
        """
        self.registry = registry or CollectorRegistry()
        logger.debug("✅ MetricsCollector initialisé")

        # =============================================================================
        # MÉTRIQUES D'INTÉGRATION
        # =============================================================================

        self.steps_count = Counter(
            name='nemd_steps',
            documentation='Total number of integration steps',
            labelnames=['strategy'],
            registry=self.registry
        )

        self.pair_checks_count = Counter(
            name='pair_checks',
            documentation='Total number of pair distance evaluations',
            labelnames=['strategy'],
            registry=self.registry
        )

        self.pairs_within_cutoff_count = Counter(
            name='pairs_within_cutoff',
            documentation='Total number of pairs found within the cutoff',
            labelnames=['strategy'],
            registry=self.registry
        )

        # =============================================================================
        # MÉTRIQUES DE TEMPS
        # =============================================================================

        self.grid_build_seconds = Histogram(
            name='grid_build_seconds',
            documentation='Cell grid construction time in seconds',
            labelnames=['strategy'],
            buckets=[1e-5, 1e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 1.0],
            registry=self.registry
        )

        self.force_scan_seconds = Histogram(
            name='force_scan_seconds',
            documentation='Neighborhood scan and force accumulation time in seconds',
            labelnames=['strategy'],
            buckets=[1e-5, 1e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 1.0],
            registry=self.registry
        )

        # =============================================================================
        # MÉTRIQUES DE GÉOMÉTRIE
        # =============================================================================

        self.remap_count = Counter(
            name='remap_events',
            documentation='Total number of lattice remap events',
            labelnames=['policy'],
            registry=self.registry
        )

        self.degenerate_grid_count = Counter(
            name='degenerate_grid_events',
            documentation='Total number of degenerate grid events',
            labelnames=['strategy'],
            registry=self.registry
        )

        self.search_efficiency_gauge = Gauge(
            name='search_efficiency_current',
            documentation='Fraction of distance checks within the cutoff at the last step',
            labelnames=['strategy'],
            registry=self.registry
        )

        self.verification_failures_count = Counter(
            name='verification_failures',
            documentation='Total number of oracle verification failures',
            labelnames=['strategy'],
            registry=self.registry
        )

        # =============================================================================
        # MÉTRIQUES D'APPLICATION
        # =============================================================================

        self.application_info = Info(
            name='application_info',
            documentation='Application information',
            registry=self.registry
        )
        self.application_info.info({
            'version': '1.0.0',
            'component': 'flowcell',
            'observability': 'prometheus_metrics'
        })

    # =============================================================================
    # MÉTHODES D'ENREGISTREMENT
    # =============================================================================

    def record_step(self, strategy: str, pair_checks: int, pairs_within_cutoff: int,
                    build_seconds: Optional[float] = None, scan_seconds: Optional[float] = None):
        """
        Enregistre un pas d'intégration

        Args:
            strategy: Stratégie de recherche (ds, do, all_pairs)
            pair_checks: Évaluations de distance du pas
            pairs_within_cutoff: Paires trouvées dans la coupure
            build_seconds: Temps de construction de la grille
            scan_seconds: Temps de balayage et d'accumulation
        """
        self.steps_count.labels(strategy=strategy).inc()
        self.pair_checks_count.labels(strategy=strategy).inc(pair_checks)
        self.pairs_within_cutoff_count.labels(strategy=strategy).inc(pairs_within_cutoff)
        if build_seconds is not None:
            self.grid_build_seconds.labels(strategy=strategy).observe(build_seconds)
        if scan_seconds is not None:
            self.force_scan_seconds.labels(strategy=strategy).observe(scan_seconds)

    def record_remap(self, policy: str):
        self.remap_count.labels(policy=policy).inc()

    def record_degenerate_grid(self, strategy: str):
        self.degenerate_grid_count.labels(strategy=strategy).inc()

    def record_verification_failure(self, strategy: str):
        self.verification_failures_count.labels(strategy=strategy).inc()

    def update_search_efficiency(self, strategy: str, efficiency: float):
        """
        Met à jour l'efficacité mesurée du dernier pas

        Args:
            strategy: ds ou do
            efficiency: Paires dans la coupure / évaluations de distance
        """
        self.search_efficiency_gauge.labels(strategy=strategy).set(efficiency)

    # =============================================================================
    # EXPOSITION DES MÉTRIQUES
    # =============================================================================

    def get_metrics(self) -> str:
        """
        Génère et retourne les métriques au format OpenMetrics

        Returns:
            Chaîne contenant toutes les métriques au format Prometheus/OpenMetrics
        """
        try:
            return generate_latest(self.registry).decode('utf-8')
        except Exception as e:
            logger.error(f"Erreur génération métriques: {e}")
            return self._get_fallback_metrics()

    def _get_fallback_metrics(self) -> str:
        """Exposition minimale écrite par --metrics quand le registre est illisible"""
        fallback = [
            "# HELP application_info Application information",
            "# TYPE application_info info",
            'application_info{version="1.0.0",component="flowcell",status="error"} 1',
            "",
            "# HELP metrics_generation_errors_total Metrics generation errors",
            "# TYPE metrics_generation_errors_total counter",
            "metrics_generation_errors_total 1",
        ]
        return "\n".join(fallback)


# =============================================================================
# FONCTIONS GLOBALES DE GESTION
# =============================================================================

def initialize_metrics_collector(registry: Optional[CollectorRegistry] = None) -> MetricsCollector:
    """
    Initialise le collecteur de métriques global avec le registry fourni

    Args:
        registry: Registry Prometheus personnalisé

    Returns:
        Instance initialisée du MetricsCollector
    """
    global _metrics_collector, _registry_in_use

    if _metrics_collector is not None and _registry_in_use is registry:
        return _metrics_collector

    _metrics_collector = MetricsCollector(registry=registry)
    _registry_in_use = registry
    return _metrics_collector


def reset_metrics_collector():
    """Reset le collecteur global - utilisé principalement pour les tests"""
    global _metrics_collector, _registry_in_use
    _metrics_collector = None
    _registry_in_use = None


def get_metrics_collector() -> MetricsCollector:
    """
    Retourne l'instance globale du collecteur de métriques

    Returns:
        Instance du MetricsCollector (crée une nouvelle si nécessaire)
    """
    global _metrics_collector
    if _metrics_collector is None:
        _metrics_collector = MetricsCollector()
    return _metrics_collector
