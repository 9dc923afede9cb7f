"""
Point d'entrée principal de flowcell.

Usage : python main.py <simulate|compare|verify|bench> [--config chemin] [options]
"""

import sys
from pathlib import Path
import logging

# Ajouter le répertoire courant au PYTHONPATH
current_dir = Path(__file__).parent
sys.path.insert(0, str(current_dir))

from src.api.cli import main

# Configuration du logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


if __name__ == "__main__":
    sys.exit(main())
