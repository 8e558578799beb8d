"""Command-line entry point.

    fluctlab <subcommand> [--config PATH] [--seed U64] [--out DIR]
                          [--threads K] [--set section.key=value]... [--verbose]

Exit codes: 0 success, 2 validation error, 3 numerical error.
"""

import argparse
import logging
import sys
from pathlib import Path
from types import ModuleType
from typing import Optional, Sequence

from fluctlab.__about__ import __version__
from fluctlab._exceptions import ConfigValidationError, ExitCode, FluctlabError, NumericalError
from fluctlab.commands import (
    Console,
    clt,
    energy,
    refine,
    selftest,
    simulate_particles,
    simulate_spde,
    solve_fp,
    weak_error,
)
from fluctlab.config import parse_config, resolve_threads

logger = logging.getLogger(__name__)

COMMANDS: dict[str, ModuleType] = {
    module.NAME: module
    for module in (
        solve_fp,
        simulate_particles,
        simulate_spde,
        weak_error,
        clt,
        energy,
        refine,
        selftest,
    )
}

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _threads(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"threads must be >= 1, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file (defaults apply when omitted)")
    common.add_argument("--seed", type=_seed, help="override run.master_seed")
    common.add_argument("--out", help="override run.output_dir")
    common.add_argument("--threads", type=_threads, help="replica worker threads (env FLUCTLAB_THREADS)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one config key; repeatable",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="fluctlab", description="Mean-field fluctuation lab.")
    parser.add_argument("--version", action="version", version=f"fluctlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, module in COMMANDS.items():
        cmd = sub.add_parser(name, parents=[common], help=module.HELP, description=module.HELP)
        if module in (simulate_particles, simulate_spde):
            cmd.add_argument("--replica", type=int, default=0, help="replica index to simulate")
        if module is refine:
            cmd.add_argument("--study", choices=refine.STUDIES, default="ladder")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None, *, console: Optional[Console] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    console = console or Console()

    try:
        cfg = parse_config(
            args.config,
            args.overrides,
            seed=args.seed,
            out=args.out,
            threads=resolve_threads(args.threads),
        )
    except ConfigValidationError as exc:
        console.print_stderr(f"FAIL  config: {exc}")
        for error in exc.errors:
            console.print_stderr(f"  ERROR: {error}")
        return ExitCode.VALIDATION

    command = COMMANDS[args.command]
    logger.info("running %s (seed %d, %d thread(s))", args.command, cfg.run.master_seed, cfg.run.threads)
    try:
        return int(command.run(cfg, console, args))
    except NumericalError as exc:
        console.print_stderr(f"NUMERICAL ERROR: {exc}")
        return ExitCode.NUMERICAL
    except FluctlabError as exc:
        console.print_stderr(f"ERROR: {exc}")
        return int(exc.exit_code)


if __name__ == "__main__":
    sys.exit(main())
