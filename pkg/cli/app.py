"""
cli/app.py
Command-line front end. Owns the parser, logging setup and the mapping from
exceptions to exit codes; each subcommand lives in its own module.

    python main.py chain    --config configs/chain_mala.toml --out runs/chain
    python main.py sweep    --config configs/sweep_optimal_mala.toml --jobs 4
    python main.py diagnose --config configs/diagnose_qn_moments.toml
"""
import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from cli.chain_cmd import cmd_chain
from cli.diagnose_cmd import cmd_diagnose
from cli.sweep_cmd import cmd_sweep
from core import __version__
from core.config import RunConfig, load_config
from core.utils import get_output_dir

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

COMMANDS: Dict[str, Callable[[RunConfig, str], int]] = {
    "chain": cmd_chain,
    "sweep": cmd_sweep,
    "diagnose": cmd_diagnose,
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxscale",
        description="Optimal-scaling experiments for MALA and proximal MALA.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("chain", "run one chain and write records, summary and manifest"),
        ("sweep", "run an experiment grid and fit gamma*, ell*, alpha*"),
        ("diagnose", "run one diagnostic and write a report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--out", help="output directory (relative paths anchor at $PROXSCALE_OUTPUT_ROOT)")
        p.add_argument("--seed", type=_u64, help="master seed, overrides run.seed")
        p.add_argument("--jobs", type=int, help="worker processes, overrides run.jobs")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config).with_overrides(seed=args.seed, jobs=args.jobs)
    if args.command == "diagnose" and cfg.diagnose is None:
        raise ValueError("diagnose needs a [diagnose] section naming the diagnostic")
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        cfg = _load(args)
    except (ValueError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        out_dir = get_output_dir(args.out or cfg.run.out)
        logging.info(f"{args.command}: config {args.config} -> {out_dir} (hash {cfg.config_hash()[:12]})")
        return COMMANDS[args.command](cfg, out_dir)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        logging.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
