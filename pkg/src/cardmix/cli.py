"""Command-line front end over :class:`cardmix.pipeline.Workbench`.

Each subcommand runs one pipeline stage against an output directory::

    cardmix gen --out run/
    cardmix pipeline --config my.json --seed 7 --out run/
    cardmix ablate only:planted --out run/

Exit status is 0 on success, 2 for configuration errors, 3 for data or
I/O errors and 4 for internal contract violations.  Diagnostics go to
standard error at the level named by ``CARDMIX_LOG`` (error, info, debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Sequence

from .errors import CardmixError, ConfigError, ContractViolation, DataError
from .pipeline import ExperimentConfig, Workbench, desk_config_path

log = logging.getLogger("cardmix")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONTRACT = 0, 2, 3, 4

STAGES = {
    "gen": "generate relations, schemas and unlabeled workloads",
    "label": "fill in true cardinalities",
    "stats": "compute per-column statistics",
    "train-ref": "train the reference model on the uniform mixture",
    "dro": "compute group weights against the reference",
    "sample": "draw the simplified training set",
    "train": "train the simplified model",
    "eval": "compare reference and simplified models on held-out groups",
    "pipeline": "run every stage from gen to eval",
}
_METHODS = {
    "gen": "gen",
    "label": "label",
    "stats": "compute_stats",
    "train-ref": "train_reference",
    "dro": "dro",
    "sample": "sample",
    "train": "train_simplified",
    "eval": "eval",
    "pipeline": "pipeline",
}


def configure_logging(env: str | None = None) -> None:
    level_name = (env if env is not None else os.environ.get("CARDMIX_LOG", "error")).strip().lower()
    if level_name not in LOG_LEVELS:
        raise ConfigError(f"CARDMIX_LOG must be one of {sorted(LOG_LEVELS)}, got {level_name!r}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(LOG_LEVELS[level_name])
    log.propagate = False


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def parse_ablation(mode: str) -> tuple[str, str]:
    """Split ``only:G`` / ``exclude:G`` into ``(mode, group)``."""
    kind, sep, group = mode.partition(":")
    if not sep or kind not in ("only", "exclude") or not group:
        raise ConfigError(f"ablation mode must look like only:<group> or exclude:<group>, got {mode!r}")
    return kind, group


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardmix", description="Desk-scale workload-mixture experiments for learned cardinality estimation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="experiment config JSON (default: bundled desk config)")
    common.add_argument("--seed", type=_seed, default=None, help="global seed, overrides the config")
    common.add_argument("--out", default="cardmix-run", help="output directory (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in STAGES.items():
        sub.add_parser(name, parents=[common], help=help_text)
    ablate = sub.add_parser("ablate", parents=[common], help="train on only:<group> or exclude:<group> and evaluate")
    ablate.add_argument("mode", help="only:<group> or exclude:<group>")
    return parser


def load_config(path: str | None, seed: int | None) -> ExperimentConfig:
    config = ExperimentConfig.load(path or desk_config_path())
    return config.with_seed(seed) if seed is not None else config


def run(args: argparse.Namespace) -> None:
    workbench = Workbench(load_config(args.config, args.seed), args.out)
    if args.command == "ablate":
        mode, group = parse_ablation(args.mode)
        workbench.ablate(mode, group)
        log.info("wrote %s", workbench.report_path(f"ablate_{mode}_{group}"))
    else:
        getattr(workbench, _METHODS[args.command])()
        log.info("%s finished; outputs under %s", args.command, args.out)


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, ContractViolation):
        return EXIT_CONTRACT
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging()
        run(args)
    except (CardmixError, OSError) as exc:
        print(f"cardmix {args.command}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
