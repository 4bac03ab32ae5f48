import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from config.settings import APP_CONFIG, EXIT_CODES, OUTPUT_FILES, PARAMETER_DESCRIPTIONS
from data.loaders import RunConfig, load_run_config
from reports.summary import ConsoleSummary
from reports.writers import write_csv, write_json, write_run_metadata
from services.lab_service import CommandResult, LabService
from utils.errors import ConfigError, DimensionMismatch, NumericalFailure, ParabolicityViolation, SingularMu
from utils.helpers import canonical_json, parse_complex

logger = logging.getLogger(__name__)


def configure_logging():
    """Log level from WESTERVELT_LOG; everything goes to stderr"""
    name = os.environ.get(APP_CONFIG["log_env_var"], APP_CONFIG["default_log_level"]).upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = getattr(logging, APP_CONFIG["default_log_level"])
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help=PARAMETER_DESCRIPTIONS["config"]["help"])
    parser.add_argument("--out", help=f"{PARAMETER_DESCRIPTIONS['out']['help']}. {PARAMETER_DESCRIPTIONS['out']['details']}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_CONFIG["prog"], description=APP_CONFIG["description"])
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_CONFIG['version']}")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_common(commands.add_parser("spectrum", help="Spectral report of the discrete block operator"))
    resolvent = commands.add_parser("resolvent", help="Resolvent residual check at one spectral parameter")
    _add_common(resolvent)
    resolvent.add_argument(
        "--lambda",
        dest="lam",
        required=True,
        help=f"{PARAMETER_DESCRIPTIONS['lambda']['help']}. {PARAMETER_DESCRIPTIONS['lambda']['details']}",
    )
    _add_common(commands.add_parser("simulate", help="Time-integrate the initial data"))
    _add_common(commands.add_parser("decay", help="Simulate and fit the exponential decay rate"))
    sweep = commands.add_parser("sweep", help="Decay fits over a list of initial amplitudes")
    _add_common(sweep)
    sweep.add_argument("--jobs", type=int, default=1, help=PARAMETER_DESCRIPTIONS["jobs"]["help"])
    return parser


def _join_lambda(argv: List[str]) -> List[str]:
    """Rewrite `--lambda RE,IM` as `--lambda=RE,IM`; argparse reads a leading minus as a flag"""
    joined, rest = [], iter(argv)
    for arg in rest:
        value = next(rest, None) if arg == "--lambda" else None
        joined.append(arg if value is None else f"--lambda={value}")
    return joined


def run_command(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    service = LabService(config)
    if args.command == "spectrum":
        return service.run_spectrum()
    if args.command == "resolvent":
        return service.run_resolvent(parse_complex(args.lam))
    if args.command == "simulate":
        return service.run_simulate()
    if args.command == "decay":
        return service.run_decay()
    if args.jobs < 1:
        raise ConfigError("jobs", f"must be at least 1, got {args.jobs}")
    return service.run_sweep(jobs=args.jobs)


def emit(result: CommandResult, out_dir: Optional[str], config_sha: str):
    """Write report files to out_dir, or the main report to stdout"""
    if out_dir is None:
        sys.stdout.write(canonical_json(result.report))
        sys.stdout.flush()
        return
    out_path = Path(out_dir)
    for name, payload in result.files.items():
        if isinstance(payload, pd.DataFrame):
            write_csv(out_path / name, payload)
        else:
            write_json(out_path / name, payload)
    write_run_metadata(out_path, result.command, config_sha)
    logger.info("wrote %d report files to %s", len(result.files), out_path)


def _table(result: CommandResult) -> Optional[pd.DataFrame]:
    return result.files.get(OUTPUT_FILES["sweep"]) if result.command == "sweep" else None


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(_join_lambda(sys.argv[1:] if argv is None else list(argv)))
    try:
        config = load_run_config(args.config)
        result = run_command(args, config)
        out_dir = args.out if args.out is not None else config.section("output")["dir"]
        emit(result, out_dir, config.sha256)
    # simulate and decay report violations as a status, so one raised here comes from the config
    except (ConfigError, SingularMu, DimensionMismatch, ParabolicityViolation) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CODES["config"]
    except NumericalFailure as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CODES["numerical"]
    ConsoleSummary().render(result.command, result.report, _table(result))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
