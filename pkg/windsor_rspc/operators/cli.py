"""
Command-line front-end: one subcommand per operator

    windsor-rspc run --scenario sinusoid --control on --seed 3 --out runs/sin
    windsor-rspc compare --config workflows/steps.toml
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence

from .. import register
from ..functions.errors import RspcError
from ..panels.report_panel import draw_panels
from ..properties.run_properties import load_config
from .registry import Context, get_operator

logger = logging.getLogger(__name__)

SUBCOMMANDS: Dict[str, str] = {
    "run": "rspc.run",
    "sweep": "rspc.sweep",
    "compare": "rspc.compare",
    "bench-estimator": "rspc.bench_estimator",
    "bench-qp": "rspc.bench_qp",
}

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windsor-rspc",
        description="Recursive subspace predictive control of a synthetic "
        "Windsor-body wake",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument(
        "--scenario", choices=("constant", "sinusoid", "steps", "sweep")
    )
    common.add_argument("--control", type=_on_off, metavar="{on,off}")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--duration", type=float, help="Simulated seconds")
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="command", required=True)
    for name, idname in SUBCOMMANDS.items():
        operator = get_operator(idname)
        command = sub.add_parser(name, parents=[common], help=operator.bl_description)
        if name == "bench-estimator":
            command.add_argument("--seeds", type=int, default=20)
            command.add_argument(
                "--open-loop", action="store_true", help="PRBS data, no feedback"
            )
        elif name == "bench-qp":
            command.add_argument("--problems", type=int, default=100)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    register()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    try:
        config = load_config(args.config).with_overrides(
            scenario=args.scenario,
            control=args.control,
            seed=args.seed,
            output_dir=str(args.out) if args.out else None,
            duration=args.duration,
        )
    except RspcError as e:
        print(f"windsor-rspc: {e}", file=sys.stderr)
        return 1

    options = {}
    if args.command == "bench-estimator":
        options = {"seeds": args.seeds, "closed_loop": not args.open_loop}
    elif args.command == "bench-qp":
        options = {"problems": args.problems}

    context = Context(config, Path(config.run.output_dir))
    operator = get_operator(SUBCOMMANDS[args.command])(**options)
    status = operator.execute(context)
    for level, message in operator.reports:
        if level == "ERROR":
            print(f"windsor-rspc: {message}", file=sys.stderr)

    summary = draw_panels(context)
    if summary:
        print(summary)
    return 0 if status == {"FINISHED"} else 1


if __name__ == "__main__":
    sys.exit(main())
