"""
Command-line interface

    tsp-aqm solve --config model.cfg [--simulate --seed 7 --events 1000000]
    tsp-aqm sweep --config sweep.cfg --out results/
    tsp-aqm reproduce --figure 3 --out results/ [--chart]
    tsp-aqm validate --config model.cfg [--dump-generator q.txt]

Exit codes: 0 success, 2 configuration or validation error, 3 solver or
metric failure, 4 IO error (including an empty result).
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__, config
from .charts import plot_sweep
from .exceptions import (
    ConfigError,
    EmptyResult,
    ModelValidationError,
    SimulationError,
    SolverError,
    TSPAQMException,
    ZeroAcceptedFlow,
)
from .generator import build_generator, check_balance_residual
from .jobs import FIGURE_JOBS, VERDICT_CONFIRMED, run_sweep, solve_model
from .runconfig import SolveSpec, SweepSpec, load_config
from .simulator import SimConfig
from .solver import solve_stationary_direct
from .tables import emit_csv, header


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _prepare_outdir(path: str) -> Path:
    outdir = Path(path)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def cmd_solve(args: argparse.Namespace) -> int:
    spec = load_config(args.config)
    if not isinstance(spec, SolveSpec):
        raise ConfigError(f"{args.config} describes a sweep; use the sweep command")

    simulate = args.simulate or spec.simulate
    simulation = None
    if simulate:
        seed = args.seed if args.seed is not None else spec.seed
        measured = args.events if args.events is not None else config.get_setting('sim_measured_events')
        simulation = SimConfig(params=spec.params, seed=seed, measured_events=measured)

    outcome = solve_model(spec.params, simulation)
    if args.out:
        emit_csv([outcome.row], args.out)
    else:
        writer = csv.writer(sys.stdout, lineterminator='\n')
        writer.writerow(header(simulate))
        writer.writerow(outcome.row.cells(simulate))

    if outcome.verdict is not None:
        for line in outcome.verdict.as_lines():
            print(f"# {line}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = load_config(args.config)
    if not isinstance(spec, SweepSpec):
        raise ConfigError(f"{args.config} has no axis; use the solve command")

    outdir = _prepare_outdir(args.out)
    result = run_sweep(spec, workers=args.workers)
    target = outdir / f"{Path(args.config).stem}.csv"
    emit_csv(result.rows, target)
    if args.chart:
        plot_sweep(result.rows, spec.axis, spec.outputs, target.with_suffix('.svg'))

    for error in result.errors:
        print(f"error: {error}", file=sys.stderr)
    return EXIT_CONFIG if result.errors else EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    outdir = _prepare_outdir(args.out)
    summary = FIGURE_JOBS[args.figure](outdir, chart=args.chart)
    print(f"{summary['figure']}: {summary['verdict']}")
    if summary['verdict'] != VERDICT_CONFIRMED:
        logger.warning(f"{summary['figure']} claim not confirmed by the computed model")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    spec = load_config(args.config)
    params = spec.params if isinstance(spec, SolveSpec) else spec.base

    generator = build_generator(params)
    if args.dump_generator:
        generator.dump_triplets(args.dump_generator)
    distribution = solve_stationary_direct(generator)
    report = check_balance_residual(params, distribution, verbose=True)

    print(f"states = {generator.dimension}")
    print(f"residual_inf = {distribution.residual_inf:.6e}")
    for line in report.as_lines():
        print(line)

    tolerance = config.get_setting('direct_residual_tol')
    if distribution.residual_inf > tolerance:
        logger.error(f"Residual {distribution.residual_inf:.3e} above {tolerance:.0e}")
        return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='tsp-aqm',
        description='Stationary analysis and simulation of a time-space priority buffer with AQM feedback.',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level.')
    subparsers = parser.add_subparsers(dest='command', required=True)

    solve = subparsers.add_parser('solve', help='Solve one model and print its result row.')
    solve.add_argument('--config', required=True, help='Single-model configuration file.')
    solve.add_argument('--simulate', action='store_true', help='Cross-check with a simulation run.')
    solve.add_argument('--seed', type=int, default=None, help='Simulation seed (64-bit unsigned).')
    solve.add_argument('--events', type=int, default=None, help='Measured simulation events.')
    solve.add_argument('--out', default=None, help='Write the row to this CSV file instead of stdout.')
    solve.set_defaults(handler=cmd_solve)

    sweep = subparsers.add_parser('sweep', help='Solve every policy x grid point of a sweep.')
    sweep.add_argument('--config', required=True, help='Sweep configuration file (with axis).')
    sweep.add_argument('--out', required=True, help='Output directory.')
    sweep.add_argument('--workers', type=int, default=None, help='Worker processes for sweep points.')
    sweep.add_argument('--chart', action='store_true', help='Also write an SVG chart.')
    sweep.set_defaults(handler=cmd_sweep)

    reproduce = subparsers.add_parser('reproduce', help='Reproduce a published figure.')
    reproduce.add_argument('--figure', required=True, choices=sorted(FIGURE_JOBS), help='Figure to reproduce.')
    reproduce.add_argument('--out', required=True, help='Output directory.')
    reproduce.add_argument('--chart', action='store_true', help='Also write an SVG chart.')
    reproduce.set_defaults(handler=cmd_reproduce)

    validate = subparsers.add_parser('validate', help='Solve a model and print the balance-equation audit.')
    validate.add_argument('--config', required=True, help='Configuration file (a sweep uses its base model).')
    validate.add_argument('--dump-generator', default=None, help='Write generator triplets to this file.')
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        return args.handler(args)
    except EmptyResult as e:
        logger.error(f"Nothing to write: {e}")
        return EXIT_IO
    except (ConfigError, ModelValidationError, SimulationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (SolverError, ZeroAcceptedFlow) as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_SOLVER
    except OSError as e:
        logger.error(f"IO error: {e}")
        return EXIT_IO
    except TSPAQMException as e:
        logger.error(f"Analysis failure: {e}")
        return EXIT_SOLVER


if __name__ == '__main__':
    sys.exit(main())
