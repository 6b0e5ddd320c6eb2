"""Command-line entry point: ``twophase simulate | analyze | version``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bart import BartOptions
from .config import METHOD_NAMES, PROFILES, build_run_config, load_config_file
from .dataset import ColumnKind, DesignRole, bind_design, infer_schema, load_table, write_results
from .errors import ConfigError, InvalidConfig, TwoPhaseError
from .methods import METHODS, AnalysisContext
from .propensity.adjustment import AdjustmentOptions
from .simulation import run_simulation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

ANALYZE_METHODS = tuple(m for m in METHOD_NAMES if m != "benchmark")


class ArgumentParser(argparse.ArgumentParser):
    """Raises InvalidConfig instead of exiting on bad arguments."""

    def error(self, message):
        raise InvalidConfig(message)


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format='[%(levelname)s] %(asctime)s | %(name)s | %(message)s'
    )


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="twophase", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    sim = commands.add_parser("simulate", help="replicated simulation of one scenario")
    sim.add_argument("--config", help="flat key = value settings file")
    sim.add_argument("--scenario", type=str.upper, choices=["S1", "S2", "S3", "S4"])
    sim.add_argument("--methods", help=f"comma-separated subset of {','.join(METHOD_NAMES)}")
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--imputations", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--profile", choices=sorted(PROFILES))
    sim.add_argument("--jobs", type=int)
    sim.add_argument("--out")
    sim.add_argument("--replicate-out", dest="replicate_out", help="also write per-replicate estimates here")
    sim.add_argument("--format", choices=["csv", "json"])
    sim.add_argument("--no-progress", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    ana = commands.add_parser("analyze", help="estimate a population mean from a two-phase data file")
    ana.add_argument("--data", required=True)
    ana.add_argument("--stratum", required=True)
    ana.add_argument("--cluster", required=True)
    ana.add_argument("--weight", required=True)
    ana.add_argument("--phase2", required=True, help="phase-II selection indicator column")
    ana.add_argument("--respondent", help="phase-II response indicator (default: selected with an observed outcome)")
    ana.add_argument("--outcome", required=True)
    ana.add_argument("--method", required=True, type=str.lower, choices=ANALYZE_METHODS)
    ana.add_argument("--categorical", default="", help="comma-separated columns to treat as categorical")
    ana.add_argument("--phase2-prob", dest="phase2_prob", type=float,
                     help="phase-II selection probability (default: selected fraction)")
    ana.add_argument("--imputations", type=int, default=10)
    ana.add_argument("--seed", type=int, default=0)
    ana.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    ana.add_argument("--level", type=float, default=0.95)
    ana.add_argument("--collapse-singletons", dest="collapse_singletons", action="store_true")
    ana.add_argument("--out")
    ana.add_argument("--format", choices=["csv", "json"], default="csv")
    ana.set_defaults(func=cmd_analyze)

    ver = commands.add_parser("version", help="print the package version")
    ver.set_defaults(func=cmd_version)
    return parser


def cmd_simulate(args: argparse.Namespace) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    flags = {key: getattr(args, key) for key in
             ("scenario", "methods", "replicates", "imputations", "seed", "profile", "jobs", "out",
              "replicate_out", "format")}
    config = build_run_config(file_values, flags)
    table = run_simulation(config, progress=not args.no_progress)
    if config.out is None:
        for record in table.to_records():
            print(json.dumps(record))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    if not 0.0 < args.level < 1.0:
        raise InvalidConfig(f"--level must lie in (0, 1), got {args.level}")
    profile = PROFILES[args.profile]
    bart = BartOptions(n_trees=profile.n_trees, n_keep=profile.n_keep, n_burn=profile.n_burn, thin=profile.thin)
    if args.method.startswith("mi-") and not 2 <= args.imputations <= bart.n_keep:
        raise InvalidConfig(f"--imputations must lie in [2, {bart.n_keep}], got {args.imputations}")

    categorical = [c for c in args.categorical.split(",") if c]
    table = load_table(args.data, infer_schema(args.data, categorical + [args.stratum, args.cluster]))
    roles = {
        args.stratum: DesignRole.STRATUM,
        args.cluster: DesignRole.CLUSTER,
        args.weight: DesignRole.WEIGHT,
        args.phase2: DesignRole.PHASE2_SELECTED,
        args.outcome: DesignRole.OUTCOME,
    }
    if args.respondent:
        roles[args.respondent] = DesignRole.PHASE2_RESPONDENT
    design, covariates = bind_design(table, roles)

    outcome = covariates.column(args.outcome)
    selection_prob = args.phase2_prob if args.phase2_prob is not None else float(np.mean(design.phase2_selected))
    ctx = AnalysisContext(
        covariates=covariates.drop([args.outcome]),
        outcome=np.where(design.phase2_respondent == 1, outcome, np.nan),
        design=design,
        phase2_selection_prob=selection_prob,
        seed=args.seed,
        imputations=args.imputations,
        level=args.level,
        collapse_singletons=args.collapse_singletons,
        binary_outcome=covariates.kind(args.outcome) is ColumnKind.BINARY,
        adjustment_options=AdjustmentOptions(bart=bart),
        imputation_options=bart,
    )
    estimate, lower, upper, metadata = METHODS[args.method].compute_estimate(ctx)
    record = {"method": args.method, "estimate": estimate, "lower": lower, "upper": upper,
              "width": upper - lower, **{k: v for k, v in metadata.items() if np.isscalar(v)}}
    if args.out:
        write_results([record], args.out, args.format)
    else:
        print(json.dumps(record))
    return EXIT_OK


def cmd_version(args: argparse.Namespace) -> int:
    print(f"twophase {__version__}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        configure_logging()
        logger.error("%s", e)
        return EXIT_CONFIG
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (TwoPhaseError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
