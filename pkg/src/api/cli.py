"""
CLI - Commandes simulate, compare, verify et bench

Codes de sortie : 0 succès, 1 erreur de configuration, 2 échec numérique ou
de vérification, 3 arrêt sur grille dégénérée.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.domain.integrator import (
    VerificationObserver,
    build_initial_lattice,
    build_policy,
    initial_state,
    run,
)
from src.domain.metrics_bench import (
    EfficiencyObserver,
    deformation_run,
    format_summary,
    long_run_average,
    merge_traces,
    normalize_cutoff,
    write_trace_csv,
)
from src.domain.tracer import RunTracer, TracerFactory
from src.infrastructure.config_parser import load_config
from src.infrastructure.monitoring import get_metrics_collector
from src.infrastructure.pair_scan import configure_threads
from src.infrastructure.settings import get_settings
from src.models.data_contracts import (
    ConfigParseError,
    DegenerateGridError,
    EfficiencyTrace,
    FlowcellError,
    ForceMode,
    RunAbortedError,
    RunConfig,
    RunStrategy,
    VerificationError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_DEGENERATE = 3

MAX_VERIFY_PARTICLES = 2000


# ============================================================================
# PARSING DES ARGUMENTS
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcell",
        description="Listes de cellules pour la dynamique moléculaire hors équilibre sous flux linéaire",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "Run NEMD avec une seule stratégie, trace CSV"),
        ("compare", "Même trajectoire pour ds et do, trace CSV et tableau récapitulatif"),
        ("verify", "Comparaison pas à pas avec l'oracle toutes-paires"),
        ("bench", "Run de déformation de la boîte seule (sans particules)"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, default=None, help="Fichier clé = valeur")
        sub.add_argument("--out", type=Path, default=None, help="Chemin du CSV de sortie")
        sub.add_argument("--steps", type=int, default=None, help="Nombre de pas")
        sub.add_argument("--strategy", choices=[s.value for s in RunStrategy], default=None)
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--metrics", type=Path, default=None, help="Export OpenMetrics en fin de run")
        sub.add_argument("--log-level", default=None, help="Niveau de logging (défaut FLOWCELL_LOG_LEVEL)")
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """
    Les options de ligne de commande priment sur le fichier

    Raises:
        ConfigParseError: Si une valeur surchargée est invalide
    """
    update = {}
    if args.steps is not None:
        if args.steps < 0:
            raise ConfigParseError(0, f"--steps négatif: {args.steps}")
        update["n_steps"] = args.steps
    if args.strategy is not None:
        update["strategy"] = RunStrategy(args.strategy)
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["output"] = str(args.out)
    return config.model_copy(update=update) if update else config


# ============================================================================
# COMMANDES
# ============================================================================

def _traced_run(config: RunConfig, strategy: RunStrategy, tracer: RunTracer,
                mode: Optional[ForceMode] = None) -> EfficiencyTrace:
    observer = EfficiencyObserver(config.potential.d_cut)
    state = initial_state(config, strategy)
    run(
        state,
        config.n_steps,
        observers=[observer],
        mode=mode or config.force_mode,
        fallback_to_all_pairs=config.fallback_to_all_pairs,
        tracer=tracer,
    )
    return observer.trace


def cmd_simulate(config: RunConfig) -> int:
    """Run d'une seule stratégie ; both est ramené à ds"""
    strategy = config.strategy if config.strategy != RunStrategy.BOTH else RunStrategy.DYNAMIC_SIZE
    tracer = TracerFactory.create_tracer(f"simulate.{strategy.value}")
    trace = _traced_run(config, strategy, tracer)
    write_trace_csv(trace, config.output)
    if len(trace) > config.burn_in_steps:
        print(format_summary(long_run_average(trace, config.burn_in_steps)))
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    """
    Même état initial pour ds puis do, exécutés séquentiellement

    Returns:
        int: Code de sortie
    """
    ds_trace = _traced_run(config, RunStrategy.DYNAMIC_SIZE, TracerFactory.create_tracer("compare.ds"))
    do_trace = _traced_run(config, RunStrategy.DYNAMIC_OFFSET, TracerFactory.create_tracer("compare.do"))
    trace = merge_traces(ds_trace, do_trace)
    write_trace_csv(trace, config.output)
    summary = long_run_average(trace, config.burn_in_steps)
    print(format_summary(summary))
    logger.info(
        f"✅ Comparaison: eff DS {summary.mean_eff_ds:.4f}, eff DO {summary.mean_eff_do:.4f}, "
        f"temps DO/DS {summary.wall_ratio if summary.wall_ratio is not None else float('nan'):.3f}"
    )
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    """
    Vérification pas à pas contre l'oracle toutes-paires

    Raises:
        ConfigParseError: Si N dépasse le coût acceptable de l'oracle
    """
    if config.n_particles > MAX_VERIFY_PARTICLES:
        raise ConfigParseError(0, f"verify limité à {MAX_VERIFY_PARTICLES} particules (N = {config.n_particles})")
    if config.strategy == RunStrategy.ALL_PAIRS:
        raise ConfigParseError(0, "verify exige une stratégie de liste de cellules")
    strategies = (
        [RunStrategy.DYNAMIC_SIZE, RunStrategy.DYNAMIC_OFFSET]
        if config.strategy == RunStrategy.BOTH else [config.strategy]
    )
    for strategy in strategies:
        tracer = TracerFactory.create_tracer(f"verify.{strategy.value}")
        verifier = VerificationObserver(tracer=tracer)
        run(
            initial_state(config, strategy),
            config.n_steps,
            observers=[verifier],
            mode=ForceMode.VERIFICATION,
            fallback_to_all_pairs=config.fallback_to_all_pairs,
            tracer=tracer,
        )
        print(f"verify {strategy.value}: {verifier.steps_checked} steps, max deviation {verifier.max_deviation:.3e}")
    return EXIT_OK


def cmd_bench(config: RunConfig) -> int:
    """
    Run de déformation sans particules, coupure normalisée (boule de volume 1)
    """
    d_cut = normalize_cutoff()
    scaled = config.model_copy(update={"box_side": config.bench_cells * d_cut})
    basis, t_star = build_initial_lattice(scaled)
    policy = build_policy(scaled, t_star)
    trace = deformation_run(
        scaled.flow, basis, policy, d_cut, config.n_steps * config.bench_dt, config.bench_dt
    )
    write_trace_csv(trace, config.output)
    print(format_summary(long_run_average(trace, config.burn_in_steps)))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


# ============================================================================
# POINT D'ENTRÉE
# ============================================================================

def _write_metrics(path: Optional[Path]) -> None:
    if path is None:
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(get_metrics_collector().get_metrics(), encoding="utf-8")
    except OSError as e:
        logger.error(f"Export des métriques impossible vers {path}: {e}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Exécute une commande et retourne le code de sortie

    Args:
        argv: Arguments (défaut : sys.argv[1:])

    Returns:
        int: 0, 1 (configuration), 2 (numérique/vérification) ou 3 (grille dégénérée)
    """
    args = build_parser().parse_args(argv)
    settings = get_settings()
    level = (args.log_level or settings.log_level).upper()
    logging.getLogger().setLevel(getattr(logging, level, logging.INFO))
    threads = configure_threads(settings.threads)
    logger.debug(f"Threads numba: {threads}")

    tracer = TracerFactory.create_tracer("cli")
    try:
        config = apply_overrides(load_config(args.config), args)
        code = COMMANDS[args.command](config)
    except ConfigParseError as e:
        tracer.log_error("CLI", type(e).__name__, str(e))
        print(f"config error: {e}", file=sys.stderr)
        code = EXIT_CONFIG
    except VerificationError as e:
        print(f"verification failed: {e}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except RunAbortedError as e:
        tracer.log_error("CLI", type(e.cause).__name__, str(e))
        print(f"run aborted: {e}", file=sys.stderr)
        code = EXIT_DEGENERATE if isinstance(e.cause, DegenerateGridError) else EXIT_NUMERICAL
    except DegenerateGridError as e:
        tracer.log_error("CLI", type(e).__name__, str(e))
        print(f"degenerate grid: {e}", file=sys.stderr)
        code = EXIT_DEGENERATE
    except (FlowcellError, ArithmeticError) as e:
        tracer.log_error("CLI", type(e).__name__, str(e))
        print(f"numerical error: {e}", file=sys.stderr)
        code = EXIT_NUMERICAL
    _write_metrics(args.metrics)
    return code


def main_entry() -> None:
    """Script console 'flowcell'"""
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    sys.exit(main())
