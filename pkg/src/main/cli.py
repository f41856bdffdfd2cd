"""
Command-line entry point.

    rgunit --out runs/toy make-toy --set network.preset=toy
    rgunit --out runs/toy train-base
    rgunit --out runs/toy translate --input face.png --target blond,female --samples 3

Exit codes: 0 ok, 1 usage, 2 precondition / data / config, 3 non-finite loss.
"""

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NoReturn

import sentry_sdk

from adaptor.storage.adaptor import get_store
from apps.core.exceptions import ConfigError, DatasetError, NonFiniteLossError, PreconditionError
from config import config

from .experiments import TABLES
from .settings import parse_config
from .stages import STAGES, run_stage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PRECONDITION = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse reports usage errors with exit status 2; ours is 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_run_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Accepted before or after the subcommand; the subparser copy must not reset the value.
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="flat dotted-key JSON experiment config")
    parser.add_argument("--out", type=Path, default=default, help="run directory")
    parser.add_argument("--seed", type=int, default=default, help="root seed of the run")
    parser.add_argument(
        "--set",
        dest="sub_overrides" if suppress else "overrides",
        action="append",
        default=argparse.SUPPRESS if suppress else [],
        metavar="KEY=VALUE",
        help="override one config key; repeatable",
    )


def build_parser() -> Parser:
    parser = Parser(prog="rgunit", description="Retrieval-guided multi-domain image translation")
    _add_run_options(parser, suppress=False)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    helps = {
        "make-toy": "render the procedural toy dataset",
        "train-base": "stage 1: train the translator",
        "train-retrieval": "stage 2: train the retrieval embedder",
        "build-index": "embed the retrieval set",
        "train-guided": "stage 3: retrieval-guided fine-tuning",
        "evaluate": "translation and retrieval reports",
    }
    for stage in STAGES:
        _add_run_options(commands.add_parser(stage, help=helps[stage]), suppress=True)

    translate = commands.add_parser("translate", help="translate one image")
    _add_run_options(translate, suppress=True)
    translate.add_argument("--input", type=Path, required=True)
    translate.add_argument("--target", default="", help="comma separated attributes, e.g. blond,female")
    translate.add_argument("--samples", type=int, default=1)
    translate.add_argument("--interpolate", metavar="TARGET_A:TARGET_B", help="write a style interpolation strip")
    translate.add_argument("--steps", type=int, default=5)

    retrieve = commands.add_parser("retrieve", help="nearest retrieval-set images for one query")
    _add_run_options(retrieve, suppress=True)
    retrieve.add_argument("--input", type=Path, required=True)
    retrieve.add_argument("--target", required=True)
    retrieve.add_argument("--k", type=int, default=10)

    ablate = commands.add_parser("ablate", help="run one ablation table")
    _add_run_options(ablate, suppress=True)
    ablate.add_argument("--table", choices=sorted(TABLES), required=True)
    return parser


def stage_arguments(args: argparse.Namespace) -> dict[str, Any]:
    if args.command == "translate":
        if args.samples < 1:
            raise UsageError("--samples must be at least 1")
        if args.interpolate is None and not args.target:
            raise UsageError("translate needs --target or --interpolate")
        if args.interpolate is not None and ":" not in args.interpolate:
            raise UsageError("--interpolate expects TARGET_A:TARGET_B")
        return {
            "input_path": args.input,
            "target": args.target,
            "samples": args.samples,
            "interpolate": args.interpolate,
            "steps": args.steps,
        }
    if args.command == "retrieve":
        return {"input_path": args.input, "target": args.target, "k": args.k}
    if args.command == "ablate":
        return {"table": args.table}
    return {}


def configure_logging() -> None:
    logging.basicConfig(
        level=config.LOG_LEVEL.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if config.SENTRY_DSN:
        sentry_sdk.init(dsn=config.SENTRY_DSN, environment=config.ENVIRONMENT)


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        kwargs = stage_arguments(args)
    except UsageError as err:
        print(f"rgunit: error: {err}", file=sys.stderr)
        return EXIT_USAGE

    try:
        overrides = [*args.overrides, *getattr(args, "sub_overrides", [])]
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = parse_config(args.config, overrides)
        store = get_store(args.out or cfg.out_dir)
        result = run_stage(args.command, cfg, store, **kwargs)
    except (PreconditionError, DatasetError, ConfigError) as err:
        logger.error(f"{args.command} failed: {err}")
        return EXIT_PRECONDITION
    except NonFiniteLossError as err:
        logger.error(f"{args.command} diverged: {err}")
        return EXIT_NUMERIC
    except ValueError as err:
        logger.error(f"{args.command}: {err}")
        return EXIT_USAGE

    print(json.dumps(result, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
