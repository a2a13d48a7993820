"""Command line entry point: `python cli.py [--config FILE] <command> [<action>]`.

Exit codes: 0 when every check passes, 1 when a tolerance check fails (the
artifacts are still written), 2 for a bad config or a run the numerics reject
(nothing is written).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from experiment import COLUMNS_HELP, DEFAULT_CONFIG, OPERATIONS, ExperimentConfig, RunOutcome, load_config, run
from gabor import FrameError
from grid_core import GridError
from symbols import SymbolError
from terms import ConfigError
from verification import VerificationError
from weights import WeightError

logger = logging.getLogger(__name__)

console = Console()

DOMAIN_ERRORS = (FrameError, GridError, SymbolError, VerificationError, WeightError)


def _configure_logging() -> None:
    name = os.getenv("TFIO_LOG", "INFO").upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(message)s")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON experiment config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="artifact directory (default: $TFIO_CACHE or ./runs)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="FFT worker threads")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="tfio", description="Time-frequency and Fourier integral operator experiments", parents=[common])
    commands = parser.add_subparsers(dest="command", required=True)
    groups = {}
    for operation in OPERATIONS:
        head, _, action = operation.partition(" ")
        if not action:
            commands.add_parser(head, parents=[common], help=COLUMNS_HELP[operation], description=COLUMNS_HELP[operation])
            continue
        if head not in groups:
            group = commands.add_parser(head, parents=[common], help=f"{head} operations")
            groups[head] = group.add_subparsers(dest="action", required=True)
        groups[head].add_parser(action, parents=[common], help=COLUMNS_HELP[operation], description=COLUMNS_HELP[operation])
    return parser


def _summary_table(config: ExperimentConfig, outcome: RunOutcome) -> Table:
    table = Table(title=f"tfio {config.operation}", show_lines=True)
    table.add_column("Field", style="cyan")
    table.add_column("Value")
    table.add_row("status", "[green]passed[/green]" if outcome.exit_code == 0 else "[red]failed[/red]")
    table.add_row("config sha256", config.digest[:16])
    table.add_row("seed", str(config.seed))
    for key, value in outcome.result.summary.items():
        table.add_row(key, value)
    table.add_row("rows", str(len(outcome.result.rows)))
    table.add_row("wall time", f"{outcome.wall_time:.2f}s")
    table.add_row("artifacts", "\n".join(str(p) for p in outcome.artifacts))
    return table


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    _configure_logging()
    args = build_parser().parse_args(argv)
    operation = args.command if getattr(args, "action", None) is None else f"{args.command} {args.action}"
    config_path = getattr(args, "config", None)
    try:
        data = load_config(config_path) if config_path else dict(DEFAULT_CONFIG)
        data["operation"] = operation
        config = ExperimentConfig.from_dict(data)
        if getattr(args, "seed", None) is not None:
            config = config.with_seed(args.seed)
        outcome = run(config, getattr(args, "out", None), getattr(args, "threads", None))
    except ConfigError as exc:
        console.print(f"config error {exc}", style="red", markup=False, soft_wrap=True)
        logger.debug("rejected config", exc_info=True)
        return 2
    except DOMAIN_ERRORS as exc:
        console.print(f"{type(exc).__name__}: {exc}", style="red", markup=False, soft_wrap=True)
        logger.debug("%s aborted", operation, exc_info=True)
        return 2
    console.print(_summary_table(config, outcome))
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
