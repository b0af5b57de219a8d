# --- hbtlab/cli.py ---

"""
Línea de comandos del laboratorio.

Subcomandos:
    simulate   --config <ruta>                      eventos + manifiesto
    correlate  --events <ruta> --config <ruta>      tabla de g² + informe del ajuste
    run        --config <ruta>                      simulate → correlate en proceso
    demo-box3  --stats b|f|d --n <int> --seed <int> fila de posiciones 1D (alias demo-row)
    oracle     <nombre> <args...> | --list          evaluación de fórmulas

Códigos de salida: 0 éxito, 1 error de uso/configuración/archivo, 2 fallo numérico.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from hbtlab import __version__
from hbtlab.core.model import ConfigError, EventFileError, NumericalError
from hbtlab.data_system.templates.templates import RunConfig, load_run_config
from hbtlab.oracles.formulas import available_formulas, evaluate
from hbtlab.pipeline.demo import STATISTICS_CODES, demo_row, format_row
from hbtlab.pipeline.graph import run_pipeline
from hbtlab.pipeline.orchestrator import HBTOrchestrator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    """Los errores de uso terminan con código 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args) -> RunConfig:
    config = load_run_config(args.config)
    if args.jobs is not None:
        if args.jobs == 0:
            raise ConfigError("--jobs debe ser positivo o negativo (-1 usa todos los núcleos), no 0.")
        config = config.model_copy(update={"n_jobs": args.jobs})
    return config


def cmd_simulate(args) -> int:
    orchestrator = HBTOrchestrator(_load(args))
    orchestrator.run_simulation()
    return EXIT_OK


def cmd_correlate(args) -> int:
    orchestrator = HBTOrchestrator(_load(args))
    fit = orchestrator.run_correlation(Path(args.events))
    print(fit.to_text())
    return EXIT_OK


def cmd_run(args) -> int:
    state = run_pipeline(HBTOrchestrator(_load(args)))
    if state.get("fit") is None:
        print(f"fit_error={state.get('fit_error')}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(state["fit"].to_text())
    return EXIT_OK


def cmd_demo_row(args) -> int:
    positions = demo_row(STATISTICS_CODES[args.stats], args.n, length=args.length, seed=args.seed)
    sys.stdout.write(format_row(positions))
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.list or not args.name:
        for name, entry in available_formulas().items():
            print(f"{name}: {entry.anchor}")
        return EXIT_OK
    try:
        values, anchor = evaluate(args.name, args.params)
    except KeyError as e:
        logger.error(e.args[0])
        return EXIT_USAGE
    for key, value in values.items():
        print(f"{key}={value:.10g}")
    print(f"anchor={anchor}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hbtlab", description="Laboratorio Monte Carlo de correlaciones de intensidad.")
    parser.add_argument("--version", action="version", version=f"hbtlab {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = sub.add_parser("simulate", help="Simula disparos y escribe el archivo de eventos.")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--jobs", type=int, default=None)
    simulate.set_defaults(func=cmd_simulate)

    correlate = sub.add_parser("correlate", help="Estima y ajusta g² a partir de un archivo de eventos.")
    correlate.add_argument("--events", required=True)
    correlate.add_argument("--config", required=True)
    correlate.add_argument("--jobs", type=int, default=None)
    correlate.set_defaults(func=cmd_correlate)

    run = sub.add_parser("run", help="Simulación y correlación en un solo proceso.")
    run.add_argument("--config", required=True)
    run.add_argument("--jobs", type=int, default=None)
    run.set_defaults(func=cmd_run)

    demo = sub.add_parser(
        "demo-box3", aliases=["demo-row"], help="Fila 1D de partículas agrupadas, independientes o antiagrupadas."
    )
    demo.add_argument("--stats", required=True, choices=sorted(STATISTICS_CODES))
    demo.add_argument("--n", type=int, required=True)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--length", type=float, default=1.0)
    demo.set_defaults(func=cmd_demo_row)

    oracle = sub.add_parser("oracle", help="Evalúa una fórmula analítica.")
    oracle.add_argument("name", nargs="?")
    oracle.add_argument("params", nargs="*")
    oracle.add_argument("--list", action="store_true")
    oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as e:
        logger.error(f"Fallo numérico: {e}")
        return EXIT_NUMERICAL
    except (ConfigError, EventFileError, ValidationError, ValueError, OSError) as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
