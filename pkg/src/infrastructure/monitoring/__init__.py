"""
Module de Monitoring et Observabilité

Ce module fournit les outils de collecte et d'exposition des métriques
d'un run (pas, évaluations de distance, remappings, temps de grille).
"""

from .metrics_collector import MetricsCollector, get_metrics_collector, initialize_metrics_collector, reset_metrics_collector

__all__ = [
    'MetricsCollector',
    'get_metrics_collector',
    'initialize_metrics_collector',
    'reset_metrics_collector'
]
