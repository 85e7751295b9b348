"""
SABR Series Lab - Command Line
Subcommands price, series, diverge, scaling, payoff and kernel emit reproducible CSV/JSON tables.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config import get_settings
from app.models.schemas import Command, OutputFormat, RunConfig
from app.services.errors import SabrLabError
from app.services.tables import get_table_service, parse_range, write_tables

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

# exact derivations above order 12 get slow
ORDER_DEFAULTS = {Command.SERIES: 12, Command.SCALING: 20}

GRID_FLAGS = ("T", "sigma0", "omega", "tau", "K", "u", "imag", "s")

COMMAND_HELP = {
    Command.PRICE: "option time values by quadrature, with ATM implied volatility",
    Command.SERIES: "exact payoff, value and implied-variance coefficients",
    Command.DIVERGE: "partial sums, optimal truncation, root test and error bounds",
    Command.SCALING: "large-sigma0 scaling limit, radius and steepest-descent contour",
    Command.PAYOFF: "samples of g, g0, g_inf and the complex continuation G",
    Command.KERNEL: "samples of the McKean kernel tail G(T, s)",
}

COMMAND_GRIDS = {
    Command.PRICE: ("T", "sigma0", "omega", "K"),
    Command.SERIES: ("sigma0",),
    Command.DIVERGE: ("T", "sigma0"),
    Command.SCALING: ("tau", "sigma0"),
    Command.PAYOFF: ("u", "sigma0", "imag"),
    Command.KERNEL: ("T", "s"),
}


def _grid(text: str) -> List[float]:
    try:
        return parse_range(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sabr-lab",
        description="Short-maturity series laboratory for the uncorrelated log-normal SABR model.",
    )
    parser.add_argument("--log-level", default="WARNING", help="Logging level (default: WARNING).")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.CSV.value)
    common.add_argument("--out", help="Output path (stdout when omitted).")
    common.add_argument("--tol", type=float, help="Quadrature tolerance, absolute and relative.")
    common.add_argument("--umax", type=float, help="Explicit upper cutoff of the u-integral.")
    common.add_argument("--order", type=int, help="Series truncation order.")
    common.add_argument("--workers", type=int, help="Worker processes for grid rows.")
    common.add_argument("--S0", type=float, help="Spot (default: 1).")

    sub = parser.add_subparsers(dest="command", required=True)
    for command, help_text in COMMAND_HELP.items():
        p = sub.add_parser(command.value, parents=[common], help=help_text, description=help_text)
        for flag in COMMAND_GRIDS[command]:
            p.add_argument(f"--{flag}", type=_grid, help=f"{flag} grid: comma list or start:step:stop")
        if command is Command.PRICE:
            p.add_argument("--atm", action="store_true", help="Price at the money (ignores --K).")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    command = Command(args.command)
    values: Dict[str, Any] = {"command": command, "format": args.format}
    for flag in GRID_FLAGS:
        grid = getattr(args, flag, None)
        if grid is not None:
            values[flag] = grid
    optional = {"out": args.out, "tol": args.tol, "umax": args.umax, "S0": args.S0, "workers": args.workers}
    values.update({k: v for k, v in optional.items() if v is not None})
    values["order"] = args.order if args.order is not None else ORDER_DEFAULTS.get(command, get_settings().series_order)
    if values.get("workers") is None:
        values["workers"] = get_settings().workers
    values["atm"] = bool(getattr(args, "atm", False))
    return RunConfig(**values)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        config = config_from_args(args)
    except ValidationError as exc:
        parser.print_usage(sys.stderr)
        print(f"sabr-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        tables = get_table_service().build(config)
    except SabrLabError as exc:
        logger.error(f"{config.command.value} failed: {exc}")
        print(f"# failed: {type(exc).__name__}: {exc}", file=sys.stdout)
        return EXIT_NUMERICAL

    written = write_tables(tables, config.format, config.out, sys.stdout)
    for path in written:
        logger.info(f"wrote {path}")
    if any(table.failures for table in tables.values()):
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
