"""
Config Parser - Fichier de configuration clé = valeur vers RunConfig

Format : une affectation par ligne, commentaires introduits par '#', lignes
vides ignorées. Les clés omises prennent les valeurs par défaut de RunConfig.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.models.data_contracts import (
    CONFIG_TRACE_TOLERANCE,
    ConfigParseError,
    FlowMatrix,
    FlowPreset,
    FlowTraceError,
    RunConfig,
)

logger = logging.getLogger(__name__)

CONFIG_KEYS = frozenset({
    "flow", "box_side", "n_particles", "density", "epsilon", "sigma", "mass",
    "temperature", "dt", "n_steps", "strategy", "policy", "reduction_threshold",
    "initial_lattice", "seed", "output", "burn_in_fraction", "force_mode",
    "fallback_to_all_pairs", "perturbation", "bench_cells", "bench_dt",
})

_FLOW_PRESETS = {
    FlowPreset.SHEAR.value: FlowMatrix.shear,
    FlowPreset.UNIAXIAL.value: FlowMatrix.uniaxial,
    FlowPreset.PLANAR_ELONGATION.value: FlowMatrix.planar_elongation,
}


def parse_flow(value: str, line_number: int = 0) -> Tuple[FlowMatrix, FlowPreset, float]:
    """
    Interprète une valeur de flux

    Formes acceptées : 'zero', '<preset> <taux>' (shear, uniaxial,
    planar_elongation) ou neuf nombres ligne par ligne.

    Returns:
        Tuple[FlowMatrix, FlowPreset, float]: (matrice, préréglage, taux)

    Raises:
        ConfigParseError: Si la valeur est mal formée
        FlowTraceError: Si la trace dépasse 1e-9
    """
    tokens = value.replace(",", " ").split()
    if not tokens:
        raise ConfigParseError(line_number, "flow: valeur vide")

    name = tokens[0].lower()
    if name == FlowPreset.ZERO.value:
        if len(tokens) != 1:
            raise ConfigParseError(line_number, "flow: 'zero' ne prend pas de taux")
        return FlowMatrix.zero(), FlowPreset.ZERO, 0.0

    if name in _FLOW_PRESETS:
        if len(tokens) != 2:
            raise ConfigParseError(line_number, f"flow: '{name}' attend un taux")
        rate = _to_float(tokens[1], line_number, "flow")
        return _FLOW_PRESETS[name](rate), FlowPreset(name), rate

    if len(tokens) != 9:
        raise ConfigParseError(line_number, f"flow: préréglage inconnu ou {len(tokens)} nombres au lieu de 9")
    a = np.array([_to_float(t, line_number, "flow") for t in tokens]).reshape(3, 3)
    trace = float(np.trace(a))
    if abs(trace) >= CONFIG_TRACE_TOLERANCE:
        raise FlowTraceError(line_number, f"flow: trace non nulle ({trace:.3e}), flux compressible")
    # Résidu d'arrondi sous la tolérance de saisie
    a = a - (trace / 3.0) * np.eye(3)
    flow = FlowMatrix(a=a)
    preset = FlowPreset.ZERO if flow.is_zero else FlowPreset.CUSTOM
    return flow, preset, float(np.max(np.abs(a)))


def _to_float(token: str, line_number: int, key: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ConfigParseError(line_number, f"{key}: nombre invalide '{token}'")


def _to_bool(token: str, line_number: int, key: str) -> bool:
    lowered = token.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigParseError(line_number, f"{key}: booléen invalide '{token}'")


def parse_config(text: str) -> RunConfig:
    """
    Construit une RunConfig depuis le texte d'un fichier de configuration

    Args:
        text: Contenu du fichier

    Returns:
        RunConfig: Configuration complète (défauts pour les clés omises)

    Raises:
        ConfigParseError: Ligne mal formée, clé inconnue ou dupliquée, valeur invalide
        FlowTraceError: Flux de trace non nulle
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(line_number, f"affectation attendue 'clé = valeur', reçu '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise ConfigParseError(line_number, f"clé inconnue '{key}'")
        if key in lines:
            raise ConfigParseError(line_number, f"clé '{key}' déjà définie ligne {lines[key]}")
        if not value:
            raise ConfigParseError(line_number, f"{key}: valeur vide")
        lines[key] = line_number

        if key == "flow":
            flow, preset, rate = parse_flow(value, line_number)
            values.update(flow=flow, flow_preset=preset, flow_rate=rate)
        elif key == "fallback_to_all_pairs":
            values[key] = _to_bool(value, line_number, key)
        else:
            values[key] = value

    if "box_side" in values and "density" in values:
        raise ConfigParseError(lines["density"], "box_side et density sont exclusifs")

    try:
        config = RunConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = str(first["loc"][0]) if first["loc"] else ""
        raise ConfigParseError(lines.get(field, 0), f"{field or 'config'}: {first['msg']}") from e

    logger.debug(f"Configuration chargée: {len(values)} clés explicites")
    return config


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """
    Lit un fichier de configuration (None = tous les défauts)

    Raises:
        ConfigParseError: Fichier illisible ou contenu invalide
    """
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParseError(0, f"lecture impossible de {path}: {e}") from e
    return parse_config(text)
