"""Command-line entry point.

Subcommands (each reads earlier artifacts from the output directory and
writes its own): ingest, train, mine, explain, evaluate, report,
print-config. Exit codes: 0 ok, 1 usage/config, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig, SCOPES, default_config_text, load_config
from .errors import ConfigError, DataError, KgExplainError, NumericError
from .rules import MODE_BOUNDED, MODE_UNBOUNDED

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="kgexplain", description=__doc__)
    parser.add_argument("command", choices=(
        "ingest", "train", "mine", "explain", "evaluate", "report", "print-config",
    ))
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--scope", choices=SCOPES, default=None, help="override explain.scope")
    parser.add_argument("--rule-mode", choices=(MODE_UNBOUNDED, MODE_BOUNDED), default=None,
                        help="override mining.mode")
    parser.add_argument("--predicate", default=None, help="restrict to one predicate label")
    parser.add_argument("--out", default=None, help="override run.out")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.scope is not None:
        cfg.scope = args.scope
    if args.rule_mode is not None:
        cfg.mode = args.rule_mode
    if args.predicate is not None:
        cfg.predicate = args.predicate
    if args.out is not None:
        cfg.out = args.out
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "print-config":
            sys.stdout.write(default_config_text())
            return EXIT_OK
        cfg = _resolve_config(args)
        from . import pipeline

        if args.command == "ingest":
            path = pipeline.cmd_ingest(cfg)
        elif args.command == "train":
            path = pipeline.cmd_train(cfg)
        elif args.command == "mine":
            path = pipeline.cmd_mine(cfg)
        elif args.command == "explain":
            path = pipeline.cmd_explain(cfg)
        elif args.command == "evaluate":
            path = pipeline.cmd_evaluate(cfg)
        else:
            path = pipeline.cmd_report(cfg)
        print(path)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KgExplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
