"""Factory Pattern pour les stratégies de liste de cellules"""

import logging
from typing import Dict, List, Type, Union

from src.domain.cell_list_interface import CellListInterface
from src.infrastructure.cell_lists.dynamic_offset import DynamicOffsetCellList
from src.infrastructure.cell_lists.dynamic_size import DynamicSizeCellList
from src.models.data_contracts import CellListStrategy

logger = logging.getLogger(__name__)


class CellListFactory:
    """Factory pour créer des instances de stratégies de liste de cellules"""

    # Registry des stratégies disponibles
    _strategies: Dict[str, Type[CellListInterface]] = {
        CellListStrategy.DYNAMIC_SIZE.value: DynamicSizeCellList,
        CellListStrategy.DYNAMIC_OFFSET.value: DynamicOffsetCellList,
    }

    # Cache des instances créées
    _instances: Dict[str, CellListInterface] = {}

    @classmethod
    def create(cls, strategy: Union[str, CellListStrategy], use_cache: bool = True) -> CellListInterface:
        """
        Crée une instance de stratégie

        Args:
            strategy: Nom de la stratégie (ds, do)
            use_cache: Utiliser le cache d'instances

        Returns:
            CellListInterface: Instance de la stratégie

        Raises:
            ValueError: Si la stratégie n'est pas supportée
        """
        name = strategy.value if isinstance(strategy, CellListStrategy) else str(strategy)
        if name not in cls._strategies:
            available = list(cls._strategies.keys())
            raise ValueError(f"Strategy '{name}' not supported. Available: {available}")

        if use_cache and name in cls._instances:
            return cls._instances[name]

        instance = cls._strategies[name]()
        if use_cache:
            cls._instances[name] = instance
        return instance

    @classmethod
    def get_available_strategies(cls) -> List[str]:
        return list(cls._strategies.keys())

    @classmethod
    def register_strategy(cls, name: str, strategy_class: Type[CellListInterface]) -> None:
        """
        Enregistre (ou remplace) une stratégie

        Args:
            name: Nom de la stratégie
            strategy_class: Classe implémentant CellListInterface
        """
        if not issubclass(strategy_class, CellListInterface):
            raise ValueError("Strategy class must implement CellListInterface")
        cls._strategies[name] = strategy_class
        cls._instances.pop(name, None)
        logger.info(f"Stratégie '{name}' enregistrée: {strategy_class.__name__}")

    @classmethod
    def clear_cache(cls) -> None:
        """Vide le cache des instances"""
        cls._instances.clear()
